import logging

import numpy as np
import pytest

from housekg.data import (
    DatasetFormatError,
    FilterIndex,
    TripleSet,
    TripleStore,
    Vocab,
    build_filter_index,
    canonical_name,
    classify_mapping,
    classify_rmp,
    dataset_statistics,
    generate_n_to_1_kg,
    generate_pattern_kg,
    load_dataset,
    save_dataset,
)


def write_split(directory, name, lines):
    (directory / f"{name}.txt").write_text("".join(line + "\n" for line in lines),
                                           encoding="utf-8")


@pytest.fixture
def toy_dir(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb", "b\tr\ta"])
    write_split(tmp_path, "valid", ["a\ts\tc"])
    write_split(tmp_path, "test", ["c\tr\ta"])
    return tmp_path


def test_load_first_appearance_order(toy_dir):
    vocab, store = load_dataset(toy_dir)
    assert vocab.entities == ["a", "b", "c"]
    assert vocab.relations == ["r", "s"]
    np.testing.assert_array_equal(store.train, [[0, 0, 1], [1, 0, 0]])
    assert dataset_statistics(store) == (3, 2, 2, 1, 1)


def test_two_line_toy_vocab(tmp_path):
    write_split(tmp_path, "train", ["x\tr\ty", "y\tr\tz"])
    write_split(tmp_path, "valid", ["x\tr\tz"])
    write_split(tmp_path, "test", ["z\tr\tx"])
    vocab, _ = load_dataset(tmp_path)
    assert (vocab.num_entities, vocab.num_relations) == (3, 1)


def test_dictionaries_pin_ids(toy_dir):
    (toy_dir / "entities.dict").write_text("0\tc\n1\tb\n2\ta\n", encoding="utf-8")
    (toy_dir / "relations.dict").write_text("0\ts\n1\tr\n", encoding="utf-8")
    vocab, store = load_dataset(toy_dir)
    assert vocab.entities == ["c", "b", "a"]
    np.testing.assert_array_equal(store.train[0], [2, 1, 1])


def test_malformed_line(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb", "a r b"])
    write_split(tmp_path, "valid", ["a\tr\tb"])
    write_split(tmp_path, "test", ["a\tr\tb"])
    with pytest.raises(DatasetFormatError, match="train.txt:2"):
        load_dataset(tmp_path)


def test_empty_file(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb"])
    write_split(tmp_path, "valid", [])
    write_split(tmp_path, "test", ["a\tr\tb"])
    with pytest.raises(DatasetFormatError, match="no triples"):
        load_dataset(tmp_path)


def test_missing_file(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb"])
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)


def test_duplicates_dropped_with_warning(tmp_path, caplog):
    write_split(tmp_path, "train", ["a\tr\tb", "a\tr\tb", "b\tr\tc"])
    write_split(tmp_path, "valid", ["a\tr\tc"])
    write_split(tmp_path, "test", ["c\tr\ta"])
    with caplog.at_level(logging.WARNING):
        _, store = load_dataset(tmp_path)
    assert len(store.train) == 2
    assert "duplicate" in caplog.text


def test_round_trip(tmp_path):
    vocab, store, _ = generate_pattern_kg(30, seed=2)
    save_dataset(tmp_path / "a", vocab, store, write_dicts=False)
    vocab2, store2 = load_dataset(tmp_path / "a")
    save_dataset(tmp_path / "b", vocab2, store2)
    vocab3, store3 = load_dataset(tmp_path / "b")
    for name in ("train", "valid", "test"):
        np.testing.assert_array_equal(store2.split(name), store3.split(name))
        names = [(vocab.entities[h], vocab.relations[r], vocab.entities[t])
                 for h, r, t in store.split(name)]
        names3 = [(vocab3.entities[h], vocab3.relations[r], vocab3.entities[t])
                  for h, r, t in store3.split(name)]
        assert names == names3


def test_vocab_digest_depends_on_order():
    assert Vocab(["a", "b"], ["r"]).digest() != Vocab(["b", "a"], ["r"]).digest()
    assert Vocab(["a", "b"], ["r"]).digest() == Vocab(["a", "b"], ["r"]).digest()


def test_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocab(["a", "a"])


def test_store_rejects_out_of_range_ids():
    with pytest.raises(ValueError):
        TripleStore(2, 1, np.array([[0, 0, 2]]))


def test_canonical_names():
    assert canonical_name("FB15k_237") == "fb15k-237"
    assert canonical_name("/data/WN18RR/") == "wn18rr"


# -- filter index --------------------------------------------------------------


def test_filter_index_single_triple():
    fi = FilterIndex(np.array([[3, 1, 5]]))
    assert fi.tails(3, 1).tolist() == [5]
    assert fi.heads(1, 5).tolist() == [3]
    assert fi.tails(5, 1).size == 0


def test_filter_index_dedupes_across_splits():
    t = np.array([[0, 0, 1]])
    fi = build_filter_index(TripleStore(2, 1, t, t, t))
    assert len(fi) == 1


def test_membership_agrees_with_linear_scan():
    rng = np.random.default_rng(0)
    triples = np.stack([rng.integers(0, 30, 300), rng.integers(0, 4, 300),
                        rng.integers(0, 30, 300)], 1)
    fi = FilterIndex(triples)
    ts = TripleSet(triples, 30, 4)
    rows = {tuple(x) for x in triples.tolist()}
    probes = np.stack([rng.integers(0, 30, 1000), rng.integers(0, 4, 1000),
                       rng.integers(0, 30, 1000)], 1)
    for p in probes:
        want = tuple(p.tolist()) in rows
        assert (tuple(p) in fi) == want
    np.testing.assert_array_equal(ts.contains(probes[:, 0], probes[:, 1], probes[:, 2]),
                                  [tuple(p) in rows for p in probes.tolist()])


# -- relation mapping ----------------------------------------------------------


@pytest.mark.parametrize("hpt,tph,want", [
    (1.0, 3.0, "1-N"), (2.0, 2.0, "N-N"), (1.0, 1.0, "1-1"), (3.0, 1.2, "N-1"),
    (1.5, 1.0, "N-1"), (1.4999, 1.4999, "1-1"),
])
def test_mapping_thresholds(hpt, tph, want):
    assert classify_mapping(hpt, tph) == want


def test_single_triple_is_one_to_one():
    store = TripleStore(2, 1, np.array([[0, 0, 1]]))
    info = classify_rmp(store)[0]
    assert (info.hpt, info.tph, info.category) == (1.0, 1.0, "1-1")


def test_rmp_uses_distinct_train_pairs_only():
    train = np.array([[0, 0, 3], [1, 0, 3], [2, 0, 3], [0, 0, 3]])
    test = np.array([[0, 0, 4], [0, 0, 5]])
    store = TripleStore(6, 2, train, test=test)
    classes = classify_rmp(store)
    assert classes[0].hpt == 3.0 and classes[0].tph == 1.0
    assert classes[0].category == "N-1"
    assert classes[1].category == "UNDEFINED"


# -- synthetic graphs ----------------------------------------------------------


def test_pattern_kg_is_deterministic():
    a = generate_pattern_kg(40, seed=5)[1]
    b = generate_pattern_kg(40, seed=5)[1]
    for name in ("train", "valid", "test"):
        np.testing.assert_array_equal(a.split(name), b.split(name))


def test_pattern_kg_needs_ten_entities():
    with pytest.raises(ValueError):
        generate_pattern_kg(9)


def test_pattern_kg_splits_disjoint():
    _, store, _ = generate_pattern_kg(50, seed=0)
    keys = [{tuple(x) for x in store.split(n).tolist()} for n in ("train", "valid", "test")]
    assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])


def test_symmetric_heldout_reverse_in_train():
    vocab, store, truth = generate_pattern_kg(50, seed=1)
    r = truth.roles["sym"]
    train = {tuple(x) for x in store.train.tolist()}
    held = truth.implied["sym"]
    assert len(held)
    for a, rr, b in held.tolist():
        assert rr == r and (b, r, a) in train and (a, r, b) not in train


def test_inverse_premises_in_train():
    _, store, truth = generate_pattern_kg(50, seed=2)
    base, inv = truth.roles["inv_base"], truth.roles["inv"]
    train = {tuple(x) for x in store.train.tolist()}
    for y, r, x in truth.implied["inv"].tolist():
        assert r == inv and (x, base, y) in train


def test_composition_premises_in_train():
    _, store, truth = generate_pattern_kg(50, seed=3)
    ra, rb = truth.roles["comp_a"], truth.roles["comp_b"]
    train = {tuple(x) for x in store.train.tolist()}
    for x, _, z in truth.implied["comp"].tolist():
        assert any((x, ra, y) in train and (y, rb, z) in train for y in range(50))


def test_heldout_triples_are_all_implied():
    _, store, truth = generate_pattern_kg(50, seed=4)
    implied = {tuple(x) for v in truth.implied.values() for x in v.tolist()}
    held = {tuple(x) for x in np.concatenate([store.valid, store.test]).tolist()}
    assert held == implied


def test_antisymmetric_relation_has_no_reverse():
    _, store, truth = generate_pattern_kg(50, seed=0)
    r = truth.roles["anti"]
    rows = {tuple(x) for x in store.all_triples().tolist() if x[1] == r}
    assert rows and all((t, r, h) not in rows for h, _, t in rows)


def test_pattern_kg_n_to_1_relation_classified():
    _, store, truth = generate_pattern_kg(50, seed=0)
    assert classify_rmp(store)[truth.roles["n_to_1"]].category == "N-1"


def test_n_to_1_kg_structure():
    vocab, store, truth = generate_n_to_1_kg(4, 10, seed=0)
    classes = classify_rmp(store)
    assert classes[truth.roles["member_of"]].category == "N-1"
    assert classes[truth.roles["has_member"]].category == "1-N"
    assert classes[truth.roles["id"]].category == "1-1"
    train = {tuple(x) for x in store.train.tolist()}
    held = np.concatenate([store.valid, store.test])
    assert len(held) == 12
    for x, r, hub in held.tolist():
        assert r == truth.roles["member_of"]
        assert (hub, truth.roles["has_member"], x) in train
