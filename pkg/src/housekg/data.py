"""Triple files, vocabularies, filter indexes and synthetic knowledge graphs.

Triple files are UTF-8, one ``head<TAB>relation<TAB>tail`` per line, named
``train.txt``, ``valid.txt`` and ``test.txt``.  Optional ``entities.dict`` and
``relations.dict`` files (``id<TAB>name``) pin the id assignment.
"""

import hashlib
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

# Published benchmark sizes: entities, relations, train, valid, test.
BENCHMARK_STATS = {
    "wn18": (40943, 18, 141442, 5000, 5000),
    "fb15k": (14951, 1345, 483142, 50000, 59071),
    "wn18rr": (40943, 11, 86835, 3034, 3134),
    "fb15k-237": (14541, 237, 272115, 17535, 20466),
    "yago3-10": (123182, 37, 1079040, 5000, 5000),
}

# Entity budget d * k per benchmark.
PARAMETER_BUDGETS = {
    "wn18": 1000,
    "fb15k": 1200,
    "wn18rr": 800,
    "fb15k-237": 600,
    "yago3-10": 1000,
}

RMP_CLASSES = ("1-1", "1-N", "N-1", "N-N")
RMP_UNDEFINED = "UNDEFINED"
RMP_THRESHOLD = 1.5


class DatasetFormatError(ValueError):
    pass


def canonical_name(name: str) -> str:
    """``FB15k_237`` / ``fb15k-237`` / ``/data/FB15k-237/`` -> ``fb15k-237``."""
    base = os.path.basename(os.path.normpath(str(name))).lower().replace("_", "-")
    return base


class Vocab:
    """Dense ids for entity and relation names, in first-appearance order."""

    def __init__(self, entities=(), relations=()):
        self.entities = list(entities)
        self.relations = list(relations)
        self.entity_ids = {e: i for i, e in enumerate(self.entities)}
        self.relation_ids = {r: i for i, r in enumerate(self.relations)}
        if len(self.entity_ids) != len(self.entities) or len(self.relation_ids) != len(self.relations):
            raise ValueError("duplicate names in vocabulary")

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def add_entity(self, name: str) -> int:
        idx = self.entity_ids.get(name)
        if idx is None:
            idx = self.entity_ids[name] = len(self.entities)
            self.entities.append(name)
        return idx

    def add_relation(self, name: str) -> int:
        idx = self.relation_ids.get(name)
        if idx is None:
            idx = self.relation_ids[name] = len(self.relations)
            self.relations.append(name)
        return idx

    def digest(self) -> str:
        h = hashlib.sha256()
        for kind, names in (("E", self.entities), ("R", self.relations)):
            h.update(f"{kind}{len(names)}\n".encode())
            for name in names:
                h.update(name.encode("utf-8"))
                h.update(b"\n")
        return h.hexdigest()


@dataclass
class TripleStore:
    """Integer ``(h, r, t)`` arrays per split."""

    num_entities: int
    num_relations: int
    train: np.ndarray
    valid: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        for name in SPLITS:
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 3)
            if arr.size:
                if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= self.num_entities:
                    raise ValueError(f"{name}: entity id out of range")
                if arr[:, 1].min() < 0 or arr[:, 1].max() >= self.num_relations:
                    raise ValueError(f"{name}: relation id out of range")
            setattr(self, name, arr)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test])

    def counts(self) -> dict:
        return {name: len(getattr(self, name)) for name in SPLITS}


def triple_keys(triples, num_entities, num_relations) -> np.ndarray:
    """Injective int64 codes for ``(h, r, t)`` rows."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (triples[:, 0] * num_relations + triples[:, 1]) * num_entities + triples[:, 2]


class TripleSet:
    """Vectorized membership tests over a fixed set of triples."""

    def __init__(self, triples, num_entities, num_relations):
        self.num_entities = num_entities
        self.num_relations = num_relations
        self.keys = np.unique(triple_keys(triples, num_entities, num_relations))

    def contains_keys(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if not len(self.keys):
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys

    def contains(self, h, r, t) -> np.ndarray:
        h, r, t = np.broadcast_arrays(np.asarray(h), np.asarray(r), np.asarray(t))
        keys = (h.astype(np.int64) * self.num_relations + r) * self.num_entities + t
        return self.contains_keys(keys)

    def __len__(self):
        return len(self.keys)


def _read_triples(path):
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            triples.append(tuple(fields))
    if not triples:
        raise DatasetFormatError(f"{path}: no triples")
    return triples


def _read_dict(path):
    names = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected 'id<TAB>name'")
            names[int(fields[0])] = fields[1]
    ids = sorted(names)
    if ids != list(range(len(ids))):
        raise DatasetFormatError(f"{path}: ids must be contiguous from 0")
    return [names[i] for i in ids]


def load_dataset(directory):
    """Read ``train/valid/test.txt`` from ``directory``.

    Ids follow ``entities.dict``/``relations.dict`` when present, otherwise
    first appearance with the train file read first.  Duplicates inside a
    split are dropped with a warning.
    """
    paths = {name: os.path.join(directory, f"{name}.txt") for name in SPLITS}
    missing = [p for p in paths.values() if not os.path.isfile(p)]
    if missing:
        raise FileNotFoundError(f"missing triple files: {', '.join(missing)}")
    raw = {name: _read_triples(path) for name, path in paths.items()}

    ent_dict = os.path.join(directory, "entities.dict")
    rel_dict = os.path.join(directory, "relations.dict")
    vocab = Vocab(
        _read_dict(ent_dict) if os.path.isfile(ent_dict) else (),
        _read_dict(rel_dict) if os.path.isfile(rel_dict) else (),
    )
    fixed_entities = os.path.isfile(ent_dict)
    fixed_relations = os.path.isfile(rel_dict)

    arrays = {}
    for name in SPLITS:
        rows = []
        seen = set()
        dupes = 0
        for h, r, t in raw[name]:
            try:
                hi = vocab.entity_ids[h] if fixed_entities else vocab.add_entity(h)
                ti = vocab.entity_ids[t] if fixed_entities else vocab.add_entity(t)
                ri = vocab.relation_ids[r] if fixed_relations else vocab.add_relation(r)
            except KeyError as exc:
                raise DatasetFormatError(f"{paths[name]}: name {exc} not in dictionary") from None
            key = (hi, ri, ti)
            if key in seen:
                dupes += 1
                continue
            seen.add(key)
            rows.append(key)
        if dupes:
            log.warning("%s: dropped %d duplicate triples", paths[name], dupes)
        arrays[name] = np.array(rows, dtype=np.int64).reshape(-1, 3)

    store = TripleStore(vocab.num_entities, vocab.num_relations, **arrays)
    overlap = _split_overlap(store)
    if overlap:
        log.warning("%s: %d triples appear in more than one split", directory, overlap)
    return vocab, store


def _split_overlap(store) -> int:
    keys = [set(triple_keys(store.split(n), store.num_entities, store.num_relations).tolist())
            for n in SPLITS]
    return len(keys[0] & keys[1]) + len(keys[0] & keys[2]) + len(keys[1] & keys[2])


def save_dataset(directory, vocab: Vocab, store: TripleStore, write_dicts=True):
    os.makedirs(directory, exist_ok=True)
    for name in SPLITS:
        with open(os.path.join(directory, f"{name}.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in store.split(name):
                fh.write(f"{vocab.entities[h]}\t{vocab.relations[r]}\t{vocab.entities[t]}\n")
    if write_dicts:
        for fname, names in (("entities.dict", vocab.entities), ("relations.dict", vocab.relations)):
            with open(os.path.join(directory, fname), "w", encoding="utf-8", newline="\n") as fh:
                for i, nm in enumerate(names):
                    fh.write(f"{i}\t{nm}\n")


def dataset_statistics(store: TripleStore) -> tuple:
    c = store.counts()
    return (store.num_entities, store.num_relations, c["train"], c["valid"], c["test"])


class FilterIndex:
    """All known true triples, looked up by ``(h, r)`` or ``(r, t)``."""

    def __init__(self, triples):
        tails = defaultdict(set)
        heads = defaultdict(set)
        for h, r, t in np.asarray(triples, dtype=np.int64).reshape(-1, 3).tolist():
            tails[(h, r)].add(t)
            heads[(r, t)].add(h)
        empty = np.zeros(0, dtype=np.int64)
        self._empty = empty
        self._tails = {key: np.fromiter(sorted(v), dtype=np.int64) for key, v in tails.items()}
        self._heads = {key: np.fromiter(sorted(v), dtype=np.int64) for key, v in heads.items()}

    def tails(self, h, r) -> np.ndarray:
        return self._tails.get((int(h), int(r)), self._empty)

    def heads(self, r, t) -> np.ndarray:
        return self._heads.get((int(r), int(t)), self._empty)

    def __contains__(self, triple) -> bool:
        h, r, t = (int(x) for x in triple)
        tails = self._tails.get((h, r))
        if tails is None:
            return False
        i = np.searchsorted(tails, t)
        return bool(i < len(tails) and tails[i] == t)

    def __len__(self):
        return sum(len(v) for v in self._tails.values())


def build_filter_index(store: TripleStore) -> FilterIndex:
    return FilterIndex(store.all_triples())


@dataclass(frozen=True)
class RelationMapping:
    hpt: float
    tph: float
    category: str


def classify_mapping(hpt: float, tph: float) -> str:
    many_heads = hpt >= RMP_THRESHOLD
    many_tails = tph >= RMP_THRESHOLD
    if many_heads and many_tails:
        return "N-N"
    if many_heads:
        return "N-1"
    if many_tails:
        return "1-N"
    return "1-1"


def classify_rmp(store: TripleStore) -> dict:
    """Mapping class of every relation from its distinct training pairs.

    ``hpt`` averages the number of distinct heads over the distinct tails of
    a relation, ``tph`` the converse.  Relations without training triples
    are ``UNDEFINED``.
    """
    out = {}
    pairs = np.unique(store.train, axis=0) if len(store.train) else store.train
    for r in range(store.num_relations):
        rows = pairs[pairs[:, 1] == r]
        if not len(rows):
            out[r] = RelationMapping(float("nan"), float("nan"), RMP_UNDEFINED)
            continue
        _, heads_per_tail = np.unique(rows[:, 2], return_counts=True)
        _, tails_per_head = np.unique(rows[:, 0], return_counts=True)
        hpt = float(heads_per_tail.mean())
        tph = float(tails_per_head.mean())
        out[r] = RelationMapping(hpt, tph, classify_mapping(hpt, tph))
    return out


# -- synthetic graphs ----------------------------------------------------------

DEFAULT_PATTERN_MIX = {
    "symmetric": True,
    "antisymmetric": True,
    "inverse": True,
    "composition": True,
    "n_to_1": True,
    "holdout": 0.3,
    "valid_fraction": 0.3,
}


@dataclass
class GroundTruth:
    """Which relation plays which role, and which held-out triples each pattern implies."""

    roles: dict
    implied: dict
    rules: list


def generate_pattern_kg(num_entities: int, pattern_mix=None, seed: int = 0):
    """Synthetic graph whose held-out triples all follow from logical patterns.

    Entities are the residues ``0 .. N-1``; relations are shifts
    ``x -> x + a (mod N)`` so that every pattern holds exactly:

    * ``sym``: shift by ``N // 2`` (an involution; closed under swapping),
    * ``anti``: shift by 1,
    * ``inv_base`` / ``inv``: shifts by ``+a`` and ``-a``,
    * ``comp_a`` / ``comp_b`` / ``comp``: shifts by ``a``, ``b`` and ``a + b``,
    * ``n_to_1``: ``x -> 5 * (x // 5)`` for ``x`` off the block start.

    ``anti``, ``inv_base``, ``comp_a``, ``comp_b`` and ``n_to_1`` are fully in
    train.  For ``sym`` a fraction of pairs keeps only one direction in train
    and the reverse is held out; for ``inv`` and ``comp`` a fraction of the
    triples is held out (their premises stay in train).  Held-out triples are
    split between valid and test.
    """
    if num_entities < 10:
        raise ValueError("need at least 10 entities")
    mix = dict(DEFAULT_PATTERN_MIX)
    mix.update(pattern_mix or {})
    rng = np.random.default_rng(seed)
    N = num_entities
    vocab = Vocab([f"e{i:03d}" for i in range(N)])
    train, held = [], []
    roles, implied, rules = {}, {}, []

    def rel(name):
        roles[name] = vocab.add_relation(name)
        return roles[name]

    def shift(a):
        return [(x, (x + a) % N) for x in range(N)]

    if mix["symmetric"]:
        r = rel("sym")
        half = N // 2
        pairs = [(x, x + half) for x in range(half)]
        one_way = pick_fraction(rng, len(pairs), mix["holdout"])
        out = []
        for i, (a, b) in enumerate(pairs):
            if rng.random() < 0.5:
                a, b = b, a
            train.append((a, r, b))
            if i in one_way:
                out.append((b, r, a))
            else:
                train.append((b, r, a))
        held += out
        implied["sym"] = out
        rules.append("sym(x,y) => sym(y,x)")

    if mix["antisymmetric"]:
        r = rel("anti")
        train += [(x, r, y) for x, y in shift(1)]
        rules.append("anti(x,y) => not anti(y,x)")

    if mix["inverse"]:
        a = 7 % N or 1
        base, r = rel("inv_base"), rel("inv")
        train += [(x, base, y) for x, y in shift(a)]
        triples = [(y, r, x) for x, y in shift(a)]
        out_idx = pick_fraction(rng, len(triples), mix["holdout"])
        out = [tr for i, tr in enumerate(triples) if i in out_idx]
        train += [tr for i, tr in enumerate(triples) if i not in out_idx]
        held += out
        implied["inv"] = out
        rules.append("inv_base(x,y) => inv(y,x)")

    if mix["composition"]:
        a, b = 3 % N or 1, 5 % N or 2
        ra, rb, rc = rel("comp_a"), rel("comp_b"), rel("comp")
        train += [(x, ra, y) for x, y in shift(a)]
        train += [(x, rb, y) for x, y in shift(b)]
        triples = [(x, rc, y) for x, y in shift(a + b)]
        out_idx = pick_fraction(rng, len(triples), mix["holdout"])
        out = [tr for i, tr in enumerate(triples) if i in out_idx]
        train += [tr for i, tr in enumerate(triples) if i not in out_idx]
        held += out
        implied["comp"] = out
        rules.append("comp_a(x,y) & comp_b(y,z) => comp(x,z)")

    if mix["n_to_1"]:
        r = rel("n_to_1")
        train += [(x, r, 5 * (x // 5)) for x in range(N) if x % 5]
        rules.append("n_to_1 maps each block of five onto its first element")

    held = np.array(held, dtype=np.int64).reshape(-1, 3)
    order = rng.permutation(len(held))
    n_valid = int(round(mix["valid_fraction"] * len(held)))
    store = TripleStore(N, vocab.num_relations, np.array(train, dtype=np.int64),
                        held[order[:n_valid]], held[order[n_valid:]])
    implied = {k: np.array(v, dtype=np.int64).reshape(-1, 3) for k, v in implied.items()}
    return vocab, store, GroundTruth(roles, implied, rules)


def generate_n_to_1_kg(num_clusters: int = 6, cluster_size: int = 20, seed: int = 0,
                       holdout: float = 0.3):
    """Graph dominated by an N-to-1 relation whose heads must stay distinguishable.

    Every cluster has one hub and ``cluster_size`` members.  ``member_of``
    maps each member to its hub (N-to-1) and ``has_member`` is its 1-to-N
    inverse.  Each member also owns a private ``id`` entity (1-to-1), so a
    model cannot satisfy ``member_of`` by merging the members of a cluster.
    ``has_member`` and ``id`` are fully in train; a fraction of the
    ``member_of`` triples is held out (each is implied by its inverse) and
    split between valid (a third) and test.
    """
    rng = np.random.default_rng(seed)
    vocab = Vocab()
    member_of = vocab.add_relation("member_of")
    has_member = vocab.add_relation("has_member")
    ident = vocab.add_relation("id")
    hubs = [vocab.add_entity(f"hub{c}") for c in range(num_clusters)]
    train, candidates = [], []
    for c, hub in enumerate(hubs):
        for j in range(cluster_size):
            x = vocab.add_entity(f"c{c}m{j}")
            train.append((hub, has_member, x))
            train.append((x, ident, vocab.add_entity(f"c{c}id{j}")))
            candidates.append((x, member_of, hub))
    out = pick_fraction(rng, len(candidates), holdout)
    held = np.array([tr for i, tr in enumerate(candidates) if i in out], dtype=np.int64)
    train += [tr for i, tr in enumerate(candidates) if i not in out]
    held = held[rng.permutation(len(held))]
    n_valid = len(held) // 3
    store = TripleStore(vocab.num_entities, vocab.num_relations, np.array(train, dtype=np.int64),
                        held[:n_valid], held[n_valid:])
    roles = {"member_of": member_of, "has_member": has_member, "id": ident}
    return vocab, store, GroundTruth(roles, {"member_of": held},
                                     ["has_member(c,x) => member_of(x,c)"])


def pick_fraction(rng, n_items, frac):
    k = int(round(frac * n_items))
    return set(rng.choice(n_items, size=k, replace=False).tolist()) if k else set()
