import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from housekg.data import FilterIndex, TripleStore, build_filter_index, classify_rmp
from housekg.evaluation import (
    MetricsReport,
    evaluate,
    filtered_rank,
    per_relation_report,
    rank_from_scores,
    rank_split,
    rmp_report,
)
from housekg.model import ModelConfig, Side, init_parameters


def naive_rank(scores, target, known):
    """Linear scan over candidates."""
    rank = 1.0
    for e, s in enumerate(scores):
        if e == target or e in set(known):
            continue
        if s < scores[target]:
            rank += 1
        elif s == scores[target]:
            rank += 0.5
    return rank


def test_rank_one_for_strict_minimum():
    assert rank_from_scores([0.1, 0.5, 0.9], 0, []) == 1.0


def test_tie_with_one_candidate_gives_half():
    assert rank_from_scores([0.3, 0.3, 0.9], 0, []) == 1.5


def test_filtering_removes_competitors():
    assert rank_from_scores([0.9, 0.1, 0.2, 0.3], 0, [1, 2, 3]) == 1.0


def test_target_in_known_set_is_kept():
    assert rank_from_scores([0.5, 0.1, 0.9], 0, [0]) == 2.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=30), st.data())
def test_rank_matches_linear_scan(raw, data):
    scores = np.array(raw, dtype=float)
    target = data.draw(st.integers(0, len(scores) - 1))
    known = data.draw(st.lists(st.integers(0, len(scores) - 1), max_size=5))
    assert rank_from_scores(scores, target, known) == naive_rank(scores, target, known)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=30), st.data())
def test_adding_filters_never_raises_rank(raw, data):
    scores = np.array(raw)
    target = data.draw(st.integers(0, len(scores) - 1))
    known = data.draw(st.lists(st.integers(0, len(scores) - 1), max_size=5))
    extra = data.draw(st.lists(st.integers(0, len(scores) - 1), max_size=5))
    assert rank_from_scores(scores, target, known + extra) <= rank_from_scores(scores, target, known)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=30), st.floats(1e-3, 1e3), st.data())
def test_positive_rescaling_keeps_rank(raw, c, data):
    scores = np.array(raw)
    target = data.draw(st.integers(0, len(scores) - 1))
    # rescaling can merge or split near-ties only through rounding; use exact binary scale
    c = 2.0 ** round(np.log2(c))
    assert rank_from_scores(scores * c, target, []) == rank_from_scores(scores, target, [])


def test_metrics_from_ranks():
    rep = MetricsReport.from_ranks([1, 4])
    assert rep.mrr == pytest.approx(0.625)
    assert rep.hits1 == 0.5 and rep.hits3 == 0.5 and rep.hits10 == 1.0
    assert rep.mr == 2.5 and rep.count == 2


def test_metrics_tie_averaged_rank_compared_with_le():
    rep = MetricsReport.from_ranks([1.5, 3.0, 3.5])
    assert rep.hits1 == 0.0
    assert rep.hits3 == pytest.approx(2 / 3)


def test_merge_is_query_weighted():
    a = MetricsReport.from_ranks([1, 2, 3])
    b = MetricsReport.from_ranks([10])
    merged = MetricsReport.merge([a, b])
    direct = MetricsReport.from_ranks([1, 2, 3, 10])
    for field in ("mr", "mrr", "hits1", "hits3", "hits10", "count"):
        assert getattr(merged, field) == pytest.approx(getattr(direct, field))


def small_world(seed=0, E=12, R=3, n=40):
    rng = np.random.default_rng(seed)
    triples = np.unique(np.stack([rng.integers(0, E, n), rng.integers(0, R, n),
                                  rng.integers(0, E, n)], 1), axis=0)
    rng.shuffle(triples)
    store = TripleStore(E, R, triples[:25], triples[25:30], triples[30:])
    model = init_parameters(ModelConfig("house", 2, 3, 1, E, R, seed=seed))
    return store, model


def test_filtered_rank_agrees_with_bulk_ranking():
    store, model = small_world()
    fi = build_filter_index(store)
    tails, heads = rank_split(model, store.test, fi)
    for i, tr in enumerate(store.test):
        assert filtered_rank(model, tr, Side.TAIL, fi).rank == tails[i]
        assert filtered_rank(model, tr, Side.HEAD, fi).rank == heads[i]


def test_filtered_rank_against_naive_scan():
    store, model = small_world(1)
    fi = build_filter_index(store)
    for h, r, t in store.test:
        scores = model.distances(h, r, np.arange(store.num_entities))
        known = [e for e in range(store.num_entities) if (h, r, e) in fi]
        assert filtered_rank(model, (h, r, t), Side.TAIL, fi).rank == naive_rank(scores, t, known)


def test_rank_bounded_by_entity_count():
    store, model = small_world(2)
    tails, heads = rank_split(model, store.all_triples(), build_filter_index(store))
    assert tails.min() >= 1 and heads.max() <= store.num_entities


def test_evaluate_counts_both_directions():
    store, model = small_world()
    rep = evaluate(model, store.test, build_filter_index(store))
    assert rep.count == 2 * len(store.test)
    assert rep.hits1 <= rep.hits3 <= rep.hits10
    assert 0 < rep.mrr <= 1 and rep.mr >= 1


def test_evaluate_rejects_empty_split():
    store, model = small_world()
    with pytest.raises(ValueError):
        evaluate(model, np.zeros((0, 3), int), build_filter_index(store))


def test_single_triple_ranked_first():
    store = TripleStore(1, 1, np.array([[0, 0, 0]]), np.zeros((0, 3), int), np.zeros((0, 3), int))
    model = init_parameters(ModelConfig("house-r", 1, 2, 0, 1, 1))
    rep = evaluate(model, store.train, build_filter_index(store))
    assert (rep.mr, rep.mrr, rep.hits1, rep.hits10) == (1.0, 1.0, 1.0, 1.0)


def test_per_relation_merge_equals_evaluate():
    store, model = small_world(3)
    fi = build_filter_index(store)
    per = per_relation_report(model, store.all_triples(), fi)
    total = evaluate(model, store.all_triples(), fi)
    assert sum(r.count for r in per.values()) == total.count
    merged = MetricsReport.merge(per.values())
    assert merged.mrr == pytest.approx(total.mrr, rel=1e-12)
    assert merged.mr == pytest.approx(total.mr, rel=1e-12)


def test_per_relation_single_relation_equals_evaluate():
    store, model = small_world(4)
    fi = build_filter_index(store)
    only = store.all_triples()[store.all_triples()[:, 1] == 0]
    per = per_relation_report(model, only, fi)
    assert list(per) == [0]
    assert per[0] == evaluate(model, only, fi)


def test_rmp_cells_cover_all_queries():
    store, model = small_world(5)
    fi = build_filter_index(store)
    rep = rmp_report(model, store.test, fi, classify_rmp(store))
    defined = [r for r, c in classify_rmp(store).items() if c.category != "UNDEFINED"]
    n = int(np.isin(store.test[:, 1], defined).sum())
    assert sum(r.count for r in rep.values()) == 2 * n


def test_rmp_one_to_one_only():
    train = np.array([[0, 0, 1], [2, 0, 3], [4, 0, 5]])
    store = TripleStore(6, 1, train, np.zeros((0, 3), int), train[:2])
    model = init_parameters(ModelConfig("house", 1, 2, 1, 6, 1))
    rep = rmp_report(model, store.test, build_filter_index(store), classify_rmp(store))
    assert {cls for _, cls in rep} == {"1-1"}
    assert set(side for side, _ in rep) == {Side.HEAD, Side.TAIL}


def test_threaded_ranking_is_identical():
    store, model = small_world(6)
    fi = build_filter_index(store)
    a = rank_split(model, store.all_triples(), fi, threads=1)
    b = rank_split(model, store.all_triples(), fi, threads=3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_filter_index_lookup():
    fi = FilterIndex(np.array([[0, 1, 2], [0, 1, 2]]))
    assert list(fi.tails(0, 1)) == [2] and list(fi.heads(1, 2)) == [0]
    assert len(fi) == 1
