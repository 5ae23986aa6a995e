"""Filtered link-prediction ranking and metric reports."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import RMP_CLASSES, RMP_UNDEFINED, FilterIndex
from .model import HousEModel, Side, row_distance

HITS_AT = (1, 3, 10)
# Upper bound on floats materialized per ranking chunk.
CHUNK_FLOATS = 1 << 23


@dataclass(frozen=True)
class RankResult:
    triple: tuple
    side: Side
    rank: float


@dataclass(frozen=True)
class MetricsReport:
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int

    @classmethod
    def from_ranks(cls, ranks) -> "MetricsReport":
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size == 0:
            raise ValueError("cannot summarize an empty set of ranks")
        hits = [float(np.mean(ranks <= k)) for k in HITS_AT]
        return cls(float(np.mean(ranks)), float(np.mean(1.0 / ranks)), *hits, int(ranks.size))

    @classmethod
    def merge(cls, reports) -> "MetricsReport":
        """Query-weighted combination of disjoint reports."""
        reports = list(reports)
        n = sum(r.count for r in reports)
        if n == 0:
            raise ValueError("cannot merge empty reports")

        def avg(attr):
            return float(sum(getattr(r, attr) * r.count for r in reports) / n)

        return cls(avg("mr"), avg("mrr"), avg("hits1"), avg("hits3"), avg("hits10"), n)

    def as_dict(self) -> dict:
        return {"MR": self.mr, "MRR": self.mrr, "H@1": self.hits1, "H@3": self.hits3,
                "H@10": self.hits10, "count": self.count}


def rank_from_scores(scores, target, known):
    """Tie-averaged filtered rank of ``target`` among ``scores`` (lower is better).

    ``known`` lists the candidates that form true triples; all of them except
    the target are removed before counting.
    """
    scores = np.asarray(scores)
    keep = np.ones(scores.shape[0], dtype=bool)
    keep[np.asarray(known, dtype=np.int64)] = False
    keep[target] = False
    s = scores[target]
    rest = scores[keep]
    return 1.0 + np.count_nonzero(rest < s) + 0.5 * np.count_nonzero(rest == s)


def filtered_rank(model: HousEModel, triple, side, filter_index: FilterIndex) -> RankResult:
    h, r, t = (int(x) for x in triple)
    side = Side(side)
    if side is Side.TAIL:
        scores = model.score_candidates(h, r, Side.TAIL)
        rank = rank_from_scores(scores, t, filter_index.tails(h, r))
    else:
        scores = model.score_candidates(t, r, Side.HEAD)
        rank = rank_from_scores(scores, h, filter_index.heads(r, t))
    return RankResult((h, r, t), side, float(rank))


def _rank_group(model, triples, filter_index, r, tables=None):
    """Tail and head ranks for triples that all share relation ``r``."""
    F, G = model.transformed_tables(r) if tables is None else tables
    n_ent = F.shape[0]
    per_query = max(1, CHUNK_FLOATS // max(1, F[0].size * n_ent))
    tail_ranks = np.empty(len(triples))
    head_ranks = np.empty(len(triples))
    for lo in range(0, len(triples), per_query):
        chunk = triples[lo:lo + per_query]
        d_tail = row_distance(G[None] - F[chunk[:, 0]][:, None])
        d_head = row_distance(F[None] - G[chunk[:, 2]][:, None])
        for i, (h, _, t) in enumerate(chunk):
            tail_ranks[lo + i] = rank_from_scores(d_tail[i], t, filter_index.tails(h, r))
            head_ranks[lo + i] = rank_from_scores(d_head[i], h, filter_index.heads(r, t))
    return tail_ranks, head_ranks


def rank_split(model: HousEModel, triples, filter_index: FilterIndex, threads=1):
    """``(tail_ranks, head_ranks)`` aligned with ``triples``.

    Work is grouped by relation so each relation's transformed entity tables
    are built once; groups are independent and may run on a thread pool.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    model._check_ids(np.concatenate([triples[:, 0], triples[:, 2]]), triples[:, 1])
    tail_ranks = np.empty(len(triples))
    head_ranks = np.empty(len(triples))
    groups = [(r, np.flatnonzero(triples[:, 1] == r)) for r in np.unique(triples[:, 1])]

    def work(item):
        r, idx = item
        return idx, _rank_group(model, triples[idx], filter_index, int(r))

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, groups))
    else:
        results = [work(g) for g in groups]
    for idx, (tr, hr) in results:
        tail_ranks[idx] = tr
        head_ranks[idx] = hr
    return tail_ranks, head_ranks


def evaluate(model: HousEModel, triples, filter_index: FilterIndex, threads=1) -> MetricsReport:
    """Metrics over both directions of every triple (``2 * len(triples)`` queries)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise ValueError("cannot evaluate an empty split")
    tail_ranks, head_ranks = rank_split(model, triples, filter_index, threads)
    return MetricsReport.from_ranks(np.concatenate([tail_ranks, head_ranks]))


def per_relation_report(model, triples, filter_index, threads=1, ranks=None) -> dict:
    """``relation -> MetricsReport``; relations absent from ``triples`` are omitted."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    tail_ranks, head_ranks = ranks if ranks is not None else rank_split(
        model, triples, filter_index, threads)
    out = {}
    for r in np.unique(triples[:, 1]):
        sel = triples[:, 1] == r
        out[int(r)] = MetricsReport.from_ranks(np.concatenate([tail_ranks[sel], head_ranks[sel]]))
    return out


def rmp_report(model, triples, filter_index, rmp_classes, threads=1, ranks=None) -> dict:
    """``(side, class) -> MetricsReport`` over relations with a defined class.

    ``side`` is the predicted position: ``Side.HEAD`` for ``(?, r, t)``
    queries and ``Side.TAIL`` for ``(h, r, ?)``.  Empty cells are omitted.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    tail_ranks, head_ranks = ranks if ranks is not None else rank_split(
        model, triples, filter_index, threads)
    labels = np.array([
        rmp_classes[int(r)].category if int(r) in rmp_classes else RMP_UNDEFINED
        for r in triples[:, 1]
    ])
    out = {}
    for side, ranks_ in ((Side.HEAD, head_ranks), (Side.TAIL, tail_ranks)):
        for cls in RMP_CLASSES:
            sel = labels == cls
            if sel.any():
                out[(side, cls)] = MetricsReport.from_ranks(ranks_[sel])
    return out
