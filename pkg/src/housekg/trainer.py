"""Self-adversarial negative sampling loss, its gradients, Adam, and the training loop.

Per positive triple with distance ``d`` and negatives ``d'_i``::

    L = -log sigmoid(gamma - d) - sum_i w_i log sigmoid(d'_i - gamma)
        + lambda / |E| * sum_e ||S_e||^2

with ``w = softmax(-alpha d')`` held constant during differentiation.  A
batch loss is the mean over its positives.  The regularizer touches every
entity at every step; training applies it as an exactly compounded
multiplicative decay inside :class:`Adam` instead of materializing dense
gradients.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import TripleSet, TripleStore, build_filter_index
from .householder import MIN_NORM
from .model import HousEModel

log = logging.getLogger(__name__)

MAX_NEGATIVE_ATTEMPTS = 100
PLATEAU_EVALS = 3


@dataclass
class TrainConfig:
    batch_size: int = 512
    negatives: int = 64
    alpha: float = 1.0
    gamma: float = 9.0
    lr: float = 1e-3
    regularization: float = 0.0
    max_steps: int = 1000
    valid_every: int = 0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_halving: bool = True
    threads: int = 1

    def __post_init__(self):
        checks = [
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.negatives >= 1, "negatives must be >= 1"),
            (self.gamma > 0, "gamma must be > 0"),
            (self.lr > 0, "lr must be > 0"),
            (self.regularization >= 0, "regularization must be >= 0"),
            (self.max_steps >= 0, "max_steps must be >= 0"),
            (self.valid_every >= 0, "valid_every must be >= 0"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


# -- loss pieces ---------------------------------------------------------------


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(log_sigmoid(x))


def adversarial_weights(neg_distances, alpha):
    """Softmax of ``-alpha * d`` over the last axis."""
    z = -alpha * np.asarray(neg_distances, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(pos_d, neg_ds, weights, gamma, reg_term=0.0):
    """Loss of one positive against its weighted negatives."""
    neg_ds = np.asarray(neg_ds, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    value = -log_sigmoid(gamma - pos_d)
    if neg_ds.size:
        value = value - np.sum(weights * log_sigmoid(neg_ds - gamma))
    return float(value + reg_term)


def regularization_term(entity, lam):
    if lam == 0:
        return 0.0
    return lam / entity.shape[0] * float(np.sum(entity * entity))


# -- negatives -----------------------------------------------------------------


@dataclass
class Batch:
    positives: np.ndarray  # (B, 3)
    negatives: np.ndarray  # (B, l) replacement entity ids
    head_mode: np.ndarray  # (B,) True where the head is corrupted

    def __len__(self):
        return len(self.positives)

    def corrupted(self):
        """Negatives as explicit ``(B, l, 3)`` triples."""
        trip = np.repeat(self.positives[:, None, :], self.negatives.shape[1], axis=1)
        col = np.where(self.head_mode, 0, 2)
        trip[np.arange(len(self)), :, col] = self.negatives
        return trip

    def subset(self, idx):
        return Batch(self.positives[idx], self.negatives[idx], self.head_mode[idx])


class NegativeSampler:
    """Uniform entity replacement that avoids known training triples."""

    def __init__(self, known: TripleSet, num_entities: int, max_attempts=MAX_NEGATIVE_ATTEMPTS):
        self.known = known
        self.num_entities = num_entities
        self.max_attempts = max_attempts

    def sample(self, positives, l, head_mode, rng):
        positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        head_mode = np.broadcast_to(np.asarray(head_mode, dtype=bool), (len(positives),))
        B = len(positives)
        cand = rng.integers(0, self.num_entities, size=(B, l))
        h = np.where(head_mode[:, None], cand, positives[:, :1])
        t = np.where(head_mode[:, None], positives[:, 2:], cand)
        r = positives[:, 1:2]
        bad = self.known.contains(h, r, t)
        attempts = 1
        while bad.any() and attempts < self.max_attempts:
            redo = rng.integers(0, self.num_entities, size=int(bad.sum()))
            cand[bad] = redo
            rows = np.nonzero(bad)[0]
            hb = np.where(head_mode[rows], redo, positives[rows, 0])
            tb = np.where(head_mode[rows], positives[rows, 2], redo)
            bad[bad] = self.known.contains(hb, positives[rows, 1], tb)
            attempts += 1
        return cand


def sample_negatives(triple, l, rng, store: TripleStore, head_mode=False):
    """``l`` corruptions of one triple, replacing its head or its tail."""
    known = TripleSet(store.train, store.num_entities, store.num_relations)
    sampler = NegativeSampler(known, store.num_entities)
    triple = np.asarray(triple, dtype=np.int64).reshape(1, 3)
    ents = sampler.sample(triple, l, np.array([head_mode]), rng)
    return Batch(triple, ents, np.array([head_mode])).corrupted()[0]


def alternating_modes(batch_size):
    """Even positions corrupt the tail, odd positions the head."""
    return np.arange(batch_size) % 2 == 1


# -- gradients -----------------------------------------------------------------


class GradientSet(dict):
    """``name -> (rows, values)`` with one entry per touched parameter row."""

    def dense(self, model: HousEModel) -> dict:
        out = {}
        for name, arr in model.parameters().items():
            g = np.zeros_like(arr)
            if name in self:
                rows, vals = self[name]
                g[rows] = vals
            out[name] = g
        return out

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for _, v in self.values() if v.size), default=0.0)


def _merge(sets):
    if len(sets) == 1:
        return sets[0]
    merged = GradientSet()
    names = []
    for s in sets:
        names += [n for n in s if n not in names]
    for name in names:
        rows = np.concatenate([s[name][0] for s in sets if name in s])
        vals = np.concatenate([s[name][1] for s in sets if name in s])
        uniq, inv = np.unique(rows, return_inverse=True)
        acc = np.zeros((len(uniq),) + vals.shape[1:])
        np.add.at(acc, inv, vals)
        merged[name] = (uniq, acc)
    return merged


def _row_direction(z):
    norms = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, z / safe, 0.0), norms[..., 0].sum(axis=-1)


def _chunk_grads(model, batch, gamma, alpha, scale, weights=None):
    """Unregularized loss sum (times ``scale``) and its gradients for one chunk."""
    pos = batch.positives
    h, r, t = pos[:, 0], pos[:, 1], pos[:, 2]
    neg = batch.negatives
    E = model.entity
    uniq, inv, units = model._relation_units(r)

    def cache(idx):
        return uniq, inv[idx][:, None], units

    tape_h, tape_t, tape_tn, tape_hn = [], [], [], []
    F = model.head_side(E[h], r, tape_h, _units=(uniq, inv, units))
    G = model.tail_side(E[t], r, tape_t, _units=(uniq, inv, units))
    dir_pos, d_pos = _row_direction(F - G)

    it = np.flatnonzero(~batch.head_mode)
    ih = np.flatnonzero(batch.head_mode)
    B, l = neg.shape
    d_neg = np.empty((B, l))
    G_tn = model.tail_side(E[neg[it]], None, tape_tn, _units=cache(it))
    dir_tn, d_neg[it] = _row_direction(F[it][:, None] - G_tn)
    F_hn = model.head_side(E[neg[ih]], None, tape_hn, _units=cache(ih))
    dir_hn, d_neg[ih] = _row_direction(F_hn - G[ih][:, None])

    if weights is None:
        weights = adversarial_weights(d_neg, alpha)
    pos_terms = -log_sigmoid(gamma - d_pos)
    neg_terms = -np.sum(weights * log_sigmoid(d_neg - gamma), axis=-1)
    value = scale * float(np.sum(pos_terms + neg_terms))

    g_pos = scale * sigmoid(d_pos - gamma)
    g_neg = -scale * weights * sigmoid(gamma - d_neg)
    gz_pos = g_pos[:, None, None] * dir_pos
    gz_tn = g_neg[it][:, :, None, None] * dir_tn
    gz_hn = g_neg[ih][:, :, None, None] * dir_hn

    gF = gz_pos.copy()
    gF[it] += gz_tn.sum(axis=1)
    gG = -gz_pos
    gG[ih] -= gz_hn.sum(axis=1)

    rel_grads = model.new_relation_grads(len(uniq))
    gS_h = model.side_backward(gF, tape_h, inv, rel_grads, head=True)
    gS_t = model.side_backward(gG, tape_t, inv, rel_grads, head=False)
    gS_tn = model.side_backward(-gz_tn, tape_tn, inv[it][:, None], rel_grads, head=False)
    gS_hn = model.side_backward(gz_hn, tape_hn, inv[ih][:, None], rel_grads, head=True)
    model.finish_relation_grads(rel_grads, units)

    d, k = E.shape[1:]
    ids = np.concatenate([h, t, neg[it].ravel(), neg[ih].ravel()])
    vals = np.concatenate([gS_h, gS_t, gS_tn.reshape(-1, d, k), gS_hn.reshape(-1, d, k)])
    ent_rows, ent_inv = np.unique(ids, return_inverse=True)
    ent_grad = np.zeros((len(ent_rows), d, k))
    np.add.at(ent_grad, ent_inv, vals)

    grads = GradientSet(entity=(ent_rows, ent_grad))
    for name, g in rel_grads.items():
        grads[name] = (uniq, g)
    return value, grads, d_pos, d_neg, weights


def batch_loss_and_grads(model, batch: Batch, config: TrainConfig, include_regularizer=True,
                         weights=None, pool=None):
    """Mean batch loss and its :class:`GradientSet`.

    With ``include_regularizer`` the returned loss includes the entity
    regularizer over all entities and the gradient includes its share for
    every touched entity row; the training loop leaves it out and lets the
    optimizer decay rows instead.
    """
    B = len(batch)
    scale = 1.0 / B
    if pool is None or B < 2:
        value, grads, *_ = _chunk_grads(model, batch, config.gamma, config.alpha, scale, weights)
    else:
        parts = np.array_split(np.arange(B), pool._max_workers)
        parts = [p for p in parts if len(p)]
        futures = [
            pool.submit(_chunk_grads, model, batch.subset(p), config.gamma, config.alpha, scale,
                        None if weights is None else weights[p])
            for p in parts
        ]
        results = [f.result() for f in futures]
        value = sum(r[0] for r in results)
        grads = _merge([r[1] for r in results])
    lam = config.regularization
    if include_regularizer and lam > 0:
        value += regularization_term(model.entity, lam)
        rows, g = grads["entity"]
        grads["entity"] = (rows, g + (2.0 * lam / model.config.num_entities) * model.entity[rows])
    return value, grads


def loss_gradients(batch: Batch, model: HousEModel, config: TrainConfig) -> GradientSet:
    """Gradients of the mean batch loss (regularizer included) for touched rows."""
    return batch_loss_and_grads(model, batch, config)[1]


def batch_loss(model, batch: Batch, config: TrainConfig, weights=None, include_regularizer=True):
    """Mean batch loss via the vectorized distance path (no gradients)."""
    corrupted = batch.corrupted()
    pos = batch.positives
    d_pos = model.distances(pos[:, 0], pos[:, 1], pos[:, 2])
    d_neg = model.distances(corrupted[..., 0], corrupted[..., 1], corrupted[..., 2])
    if weights is None:
        weights = adversarial_weights(d_neg, config.alpha)
    values = [loss(dp, dn, w, config.gamma) for dp, dn, w in zip(d_pos, d_neg, weights)]
    total = float(np.mean(values))
    if include_regularizer:
        total += regularization_term(model.entity, config.regularization)
    return total


# -- optimizer -----------------------------------------------------------------


class Adam:
    """Bias-corrected Adam over sparse row gradients.

    Only rows present in a :class:`GradientSet` have their moments and
    values updated.  Entity regularization is a decoupled decay
    ``S <- (1 - 2 lr lambda / |E|) S`` that every entity receives at every
    step; it is tracked as a running log-factor and applied to a row only
    when the row is next read (:meth:`sync`) or on :meth:`flush`.
    """

    def __init__(self, model: HousEModel, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 regularization=0.0):
        self.model = model
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.regularization = regularization
        self.step_count = 0
        params = model.parameters()
        self.m = {name: np.zeros_like(a) for name, a in params.items()}
        self.v = {name: np.zeros_like(a) for name, a in params.items()}
        self.synced = np.zeros(model.config.num_entities, dtype=np.int64)
        self._cumlog = np.zeros(1024)

    def _decay_rate(self):
        return 2.0 * self.lr * self.regularization / self.model.config.num_entities

    def sync(self, rows, upto=None):
        """Apply pending decay to entity ``rows`` through step ``upto``."""
        if self.regularization == 0:
            return
        upto = self.step_count if upto is None else upto
        rows = np.asarray(rows, dtype=np.int64)
        pending = self._cumlog[upto] - self._cumlog[self.synced[rows]]
        todo = pending != 0
        if todo.any():
            r = rows[todo]
            self.model.entity[r] *= np.exp(pending[todo])[:, None, None]
        self.synced[rows] = upto

    def flush(self):
        self.sync(np.arange(self.model.config.num_entities))

    def step(self, grads: GradientSet):
        self.step_count += 1
        s = self.step_count
        if self.regularization > 0:
            c = self._decay_rate()
            if not c < 1:
                raise ValueError(f"decay factor 1 - {c} is not positive; lower lr or lambda")
            if s >= len(self._cumlog):
                self._cumlog = np.concatenate([self._cumlog, np.zeros(len(self._cumlog))])
            self._cumlog[s] = self._cumlog[s - 1] + math.log1p(-c)
            if "entity" in grads:
                self.sync(grads["entity"][0], s)
        bc1 = 1.0 - self.beta1 ** s
        bc2 = 1.0 - self.beta2 ** s
        params = self.model.parameters()
        for name, (rows, g) in grads.items():
            p, m, v = params[name], self.m[name], self.v[name]
            m_rows = self.beta1 * m[rows] + (1.0 - self.beta1) * g
            v_rows = self.beta2 * v[rows] + (1.0 - self.beta2) * (g * g)
            m[rows] = m_rows
            v[rows] = v_rows
            p[rows] -= self.lr * (m_rows / bc1) / (np.sqrt(v_rows / bc2) + self.eps)


def adam_step(model, grads, state: Adam, lr=None):
    if lr is not None:
        state.lr = lr
    state.step(grads)
    return model, state


def repair_degenerate(model: HousEModel, rows, rng):
    """Redraw reflection/axis vectors whose norm fell below the kernel bound."""
    fixed = 0
    for name in ("rotation", "head_axes", "tail_axes"):
        arr = getattr(model, name)
        if not arr.size:
            continue
        sub = arr[rows]
        bad = np.linalg.norm(sub, axis=-1) < MIN_NORM
        if bad.any():
            sub[bad] = rng.standard_normal((int(bad.sum()), arr.shape[-1]))
            arr[rows] = sub
            fixed += int(bad.sum())
    if fixed:
        log.warning("re-initialized %d degenerate relation vectors", fixed)
    return fixed


# -- loop ----------------------------------------------------------------------


@dataclass
class LogRow:
    step: int
    loss: float
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    seconds: float

    HEADER = ("step", "loss", "MR", "MRR", "H@1", "H@3", "H@10", "seconds")

    def tsv(self) -> str:
        return (f"{self.step}\t{self.loss:.6f}\t{self.mr:.4f}\t{self.mrr:.6f}\t{self.hits1:.6f}"
                f"\t{self.hits3:.6f}\t{self.hits10:.6f}\t{self.seconds:.2f}")


@dataclass
class TrainResult:
    model: HousEModel
    log: list = field(default_factory=list)
    losses: np.ndarray = None
    best_step: int = 0
    best_valid: object = None


class _BatchStream:
    def __init__(self, triples, batch_size, rng):
        self.triples = triples
        self.batch_size = min(batch_size, len(triples))
        self.rng = rng
        self.order = rng.permutation(len(triples))
        self.pos = 0

    def next(self):
        if self.pos + self.batch_size > len(self.order):
            self.order = self.rng.permutation(len(self.triples))
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return self.triples[idx]


def train(model: HousEModel, store: TripleStore, config: TrainConfig, filter_index=None,
          log_stream=None, progress=None) -> TrainResult:
    """Train ``model`` in place and return it with the evaluation log.

    Every ``valid_every`` steps the model is ranked on the validation split;
    the parameters with the best validation MRR are restored at the end.
    ``log_stream`` receives one tab-separated line per evaluation.
    """
    from .evaluation import evaluate

    rng = np.random.default_rng(config.seed)
    known = TripleSet(store.train, store.num_entities, store.num_relations)
    sampler = NegativeSampler(known, store.num_entities)
    stream = _BatchStream(store.train, config.batch_size, rng)
    optimizer = Adam(model, config.lr, config.beta1, config.beta2, config.eps,
                     config.regularization)
    result = TrainResult(model, losses=np.zeros(config.max_steps))
    validate = config.valid_every > 0 and len(store.valid) > 0
    if validate and filter_index is None:
        filter_index = build_filter_index(store)
    best_mrr, best_params, stalls, halved = -1.0, None, 0, False
    since_eval = []
    t0 = time.perf_counter()
    if log_stream is not None:
        log_stream.write("\t".join(LogRow.HEADER) + "\n")

    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for step in range(1, config.max_steps + 1):
            positives = stream.next()
            modes = alternating_modes(len(positives))
            negatives = sampler.sample(positives, config.negatives, modes, rng)
            batch = Batch(positives, negatives, modes)
            optimizer.sync(np.unique(np.concatenate(
                [positives[:, 0], positives[:, 2], negatives.ravel()])))
            value, grads = batch_loss_and_grads(model, batch, config, include_regularizer=False,
                                                pool=pool)
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite loss at step {step}")
            optimizer.step(grads)
            repair_degenerate(model, np.unique(positives[:, 1]), rng)
            result.losses[step - 1] = value
            since_eval.append(value)

            if validate and step % config.valid_every == 0:
                optimizer.flush()
                report = evaluate(model, store.valid, filter_index, threads=config.threads)
                row = LogRow(step, float(np.mean(since_eval)), report.mr, report.mrr,
                             report.hits1, report.hits3, report.hits10, time.perf_counter() - t0)
                since_eval = []
                result.log.append(row)
                if log_stream is not None:
                    log_stream.write(row.tsv() + "\n")
                    log_stream.flush()
                if progress is not None:
                    progress(row)
                if report.mrr > best_mrr:
                    best_mrr, stalls = report.mrr, 0
                    best_params = model.copy()
                    result.best_step, result.best_valid = step, report
                else:
                    stalls += 1
                    if config.lr_halving and not halved and stalls >= PLATEAU_EVALS:
                        optimizer.lr /= 2.0
                        halved = True
                        log.info("validation MRR stalled; lr halved to %g", optimizer.lr)
    finally:
        if pool is not None:
            pool.shutdown()

    optimizer.flush()
    if best_params is not None:
        model.load_state(best_params)
    else:
        result.best_step = config.max_steps
    return result
