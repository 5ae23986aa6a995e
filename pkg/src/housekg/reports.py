"""Tab-separated report files."""

import csv

from .evaluation import MetricsReport

METRIC_COLUMNS = ("MR", "MRR", "H@1", "H@3", "H@10", "count")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_tsv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_tsv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    return rows[0], rows[1:]


def _metric_values(report: MetricsReport):
    d = report.as_dict()
    return [d[c] for c in METRIC_COLUMNS]


def write_metrics(path, split: str, report: MetricsReport):
    write_tsv(path, ("split",) + METRIC_COLUMNS, [[split] + _metric_values(report)])


def write_per_relation(path, reports: dict, relation_names=None):
    rows = []
    for r, rep in sorted(reports.items()):
        name = relation_names[r] if relation_names is not None else str(r)
        rows.append([r, name] + _metric_values(rep))
    write_tsv(path, ("relation_id", "relation") + METRIC_COLUMNS, rows)


def write_rmp(path, reports: dict):
    rows = [[side.value, cls] + _metric_values(rep)
            for (side, cls), rep in reports.items()]
    write_tsv(path, ("predict", "class") + METRIC_COLUMNS, rows)


def write_rmp_classes(path, classes: dict, relation_names=None):
    rows = []
    for r, info in sorted(classes.items()):
        name = relation_names[r] if relation_names is not None else str(r)
        rows.append([r, name, info.hpt, info.tph, info.category])
    write_tsv(path, ("relation_id", "relation", "hpt", "tph", "class"), rows)


def write_train_log(path, log_rows):
    from .trainer import LogRow

    write_tsv(path, LogRow.HEADER,
              [[r.step, r.loss, r.mr, r.mrr, r.hits1, r.hits3, r.hits10, r.seconds]
               for r in log_rows])
