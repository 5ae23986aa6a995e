"""HousE-family embedding model: parameter tables and distance functions.

Entity ``e`` is a ``(d, k)`` array.  Relation ``r`` holds, per row ``i``:

* ``rotation[r, i]``: ``2 * (k // 2)`` raw reflection vectors,
* ``head_axes[r, i]`` / ``head_taus[r, i]``: ``m`` projection entries for heads,
* ``tail_axes[r, i]`` / ``tail_taus[r, i]``: ``m`` projection entries for tails,
* ``translation[r, i]`` (plus variants only).

The distance of ``(h, r, t)`` is ``sum_i ||F_r(h)[i] - G_r(t)[i]||`` where the
head side ``F_r`` projects, rotates and (optionally) translates, and the tail
side ``G_r`` only projects.  The batched kernels below keep enough
intermediate state to run the backward pass by hand.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .householder import MIN_NORM, DegenerateVectorError

DEFAULT_GAMMA = 9.0


class Variant(str, enum.Enum):
    HOUSE_R = "house-r"
    HOUSE = "house"
    HOUSE_R_PLUS = "house-r-plus"
    HOUSE_PLUS = "house-plus"

    @property
    def has_projection(self) -> bool:
        return self in (Variant.HOUSE, Variant.HOUSE_PLUS)

    @property
    def has_translation(self) -> bool:
        return self in (Variant.HOUSE_R_PLUS, Variant.HOUSE_PLUS)


class Side(str, enum.Enum):
    HEAD = "head"
    TAIL = "tail"


@dataclass
class ModelConfig:
    variant: Variant
    d: int
    k: int
    m: int
    num_entities: int
    num_relations: int
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if self.num_entities < 1 or self.num_relations < 1:
            raise ValueError("need at least one entity and one relation")
        if not self.variant.has_projection:
            self.m = 0

    @property
    def n(self) -> int:
        return self.k // 2


# Parameter order is the checkpoint payload order.
RELATION_PARAMS = ("rotation", "head_axes", "head_taus", "tail_axes", "tail_taus", "translation")


def _unit(raw, name="vector"):
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    if norms.size and not norms.min() >= MIN_NORM:
        idx = np.unravel_index(np.argmin(norms), norms.shape)[:-1]
        raise DegenerateVectorError(
            f"{name} at index {tuple(int(i) for i in idx)} has norm {norms.min():.3g}")
    return raw / norms, norms


def _unit_backward(grad_unit, unit, norms):
    """Pull a gradient on ``raw / ||raw||`` back onto ``raw``."""
    radial = np.sum(grad_unit * unit, axis=-1, keepdims=True)
    return (grad_unit - radial * unit) / norms


class HousEModel:
    """Parameter tables plus forward/backward kernels.

    Only the tables are state; the kernels are pure functions of them, so a
    frozen model can be scored from several threads at once.
    """

    def __init__(self, config: ModelConfig, entity, rotation, head_axes=None,
                 head_taus=None, tail_axes=None, tail_taus=None, translation=None):
        self.config = config
        self.entity = entity
        self.rotation = rotation
        R, d, k, m = config.num_relations, config.d, config.k, config.m
        if config.variant.has_projection and m > 0:
            self.head_axes, self.head_taus = head_axes, head_taus
            self.tail_axes, self.tail_taus = tail_axes, tail_taus
        else:
            self.head_axes = self.tail_axes = np.zeros((R, d, 0, k))
            self.head_taus = self.tail_taus = np.zeros((R, d, 0))
        self.translation = translation if config.variant.has_translation else None
        self._check_shapes()

    def _check_shapes(self):
        c = self.config
        expected = {
            "entity": (c.num_entities, c.d, c.k),
            "rotation": (c.num_relations, c.d, 2 * c.n, c.k),
            "head_axes": (c.num_relations, c.d, c.m, c.k),
            "head_taus": (c.num_relations, c.d, c.m),
            "tail_axes": (c.num_relations, c.d, c.m, c.k),
            "tail_taus": (c.num_relations, c.d, c.m),
        }
        if c.variant.has_translation:
            expected["translation"] = (c.num_relations, c.d, c.k)
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None or arr.shape != shape:
                got = None if arr is None else arr.shape
                raise ValueError(f"{name} has shape {got}, expected {shape}")

    # -- parameter bookkeeping -------------------------------------------------

    def parameters(self) -> dict:
        """Trainable arrays by name, in checkpoint order (empty tables skipped)."""
        params = {"entity": self.entity}
        for name in RELATION_PARAMS:
            arr = getattr(self, name)
            if arr is not None and arr.size:
                params[name] = arr
        return params

    def copy(self) -> "HousEModel":
        c = self.config
        return HousEModel(
            ModelConfig(c.variant, c.d, c.k, c.m, c.num_entities, c.num_relations, c.seed),
            **{name: arr.copy() for name, arr in self.parameters().items()},
        )

    def load_state(self, other: "HousEModel"):
        for name, arr in other.parameters().items():
            getattr(self, name)[...] = arr

    # -- batched kernels -------------------------------------------------------

    def _relation_units(self, rels):
        """Normalized relation vectors for the distinct relations in ``rels``."""
        uniq, inv = np.unique(rels, return_inverse=True)
        units = {}
        for name in ("rotation", "head_axes", "tail_axes"):
            raw = getattr(self, name)[uniq]
            if raw.size:
                units[name] = _unit(raw, name)
            else:
                units[name] = (raw, np.ones(raw.shape[:-1] + (1,)))
        return uniq, inv.reshape(np.shape(rels)), units

    def _check_ids(self, ents=None, rels=None):
        c = self.config
        if ents is not None:
            ents = np.asarray(ents)
            if ents.size and (ents.min() < 0 or ents.max() >= c.num_entities):
                raise IndexError(f"entity id out of range [0, {c.num_entities})")
        if rels is not None:
            rels = np.asarray(rels)
            if rels.size and (rels.min() < 0 or rels.max() >= c.num_relations):
                raise IndexError(f"relation id out of range [0, {c.num_relations})")

    @staticmethod
    def _project_rows(x, axes, taus, tape=None, prefix="head"):
        # x: (..., d, k); axes: (..., d, m, k) unit; taus: (..., d, m)
        for j in range(axes.shape[-2]):
            p = axes[..., j, :]
            tau = taus[..., j]
            dot = np.sum(x * p, axis=-1)
            if tape is not None:
                tape.append((prefix, j, x, dot, p, tau))
            x = x - (tau * dot)[..., None] * p
        return x

    @staticmethod
    def _rotate_rows(x, units, tape=None):
        for j in range(units.shape[-2]):
            u = units[..., j, :]
            dot = np.sum(x * u, axis=-1)
            if tape is not None:
                tape.append(("rotation", j, x, dot, u, None))
            x = x - (2.0 * dot)[..., None] * u
        return x

    def head_side(self, S, rels, tape=None, _units=None):
        """``F_r(S)``: project with the head chain, rotate, translate.

        ``S`` is ``(..., d, k)``; ``rels`` matches ``S.shape[:-2]``.  Passing
        a list as ``tape`` records what :meth:`side_backward` needs.
        """
        uniq, inv, units = _units if _units is not None else self._relation_units(rels)
        x = self._project_rows(S, units["head_axes"][0][inv], self.head_taus[uniq][inv],
                               tape, "head")
        x = self._rotate_rows(x, units["rotation"][0][inv], tape)
        if self.translation is not None:
            x = x + self.translation[uniq][inv]
        return x

    def tail_side(self, S, rels, tape=None, _units=None):
        """``G_r(S)``: project with the tail chain."""
        uniq, inv, units = _units if _units is not None else self._relation_units(rels)
        return self._project_rows(S, units["tail_axes"][0][inv], self.tail_taus[uniq][inv],
                                  tape, "tail")

    def project_entity(self, S_e, r, side: Side):
        """Relation-specific representation of one ``(d, k)`` entity array."""
        self._check_ids(rels=[r])
        side = Side(side)
        S_e = np.asarray(S_e, dtype=np.float64)
        uniq, inv, units = self._relation_units(np.array([r]))
        name = "head" if side is Side.HEAD else "tail"
        axes = units[f"{name}_axes"][0][0]
        taus = getattr(self, f"{name}_taus")[r]
        return self._project_rows(S_e, axes, taus)

    def rotate_head(self, S, r):
        """Row-wise rotation of an already projected ``(d, k)`` array."""
        self._check_ids(rels=[r])
        _, _, units = self._relation_units(np.array([r]))
        return self._rotate_rows(np.asarray(S, dtype=np.float64), units["rotation"][0][0])

    def distances(self, heads, rels, tails):
        """Vectorized distances for aligned id arrays."""
        heads, rels, tails = np.broadcast_arrays(
            np.asarray(heads), np.asarray(rels), np.asarray(tails))
        self._check_ids(np.concatenate([heads.ravel(), tails.ravel()]), rels)
        cache = self._relation_units(rels)
        F = self.head_side(self.entity[heads], rels, _units=cache)
        G = self.tail_side(self.entity[tails], rels, _units=cache)
        return row_distance(F - G)

    def distance(self, h, r, t) -> float:
        return float(self.distances(np.array([h]), np.array([r]), np.array([t]))[0])

    def score_candidates(self, fixed, r, side: Side, candidates=None):
        """Distances for every candidate entity filling ``side`` of the triple.

        ``side=HEAD`` ranks heads for ``(?, r, fixed)``; ``side=TAIL`` ranks
        tails for ``(fixed, r, ?)``.  The fixed entity is transformed once.
        """
        side = Side(side)
        self._check_ids([fixed], [r])
        if candidates is None:
            candidates = np.arange(self.config.num_entities)
        cache = self._relation_units(np.array([r]))
        rel1 = np.zeros(1, dtype=np.int64)
        if side is Side.TAIL:
            anchor = self.head_side(self.entity[[fixed]], rel1, _units=cache)
            others = self.tail_side(self.entity[candidates], rel1, _units=cache)
        else:
            anchor = self.tail_side(self.entity[[fixed]], rel1, _units=cache)
            others = self.head_side(self.entity[candidates], rel1, _units=cache)
        return row_distance(others - anchor)

    def transformed_tables(self, r):
        """``(F_r(all entities), G_r(all entities))`` for bulk ranking."""
        self._check_ids(rels=[r])
        cache = self._relation_units(np.array([r]))
        rel1 = np.zeros(1, dtype=np.int64)
        return (self.head_side(self.entity, rel1, _units=cache),
                self.tail_side(self.entity, rel1, _units=cache))

    # -- backward --------------------------------------------------------------

    def side_backward(self, grad_out, tape, inv, grads, head: bool):
        """Backpropagate ``grad_out`` through a taped head or tail side.

        Per-sample gradients on normalized vectors and scalars are summed per
        distinct relation (index ``inv`` into the unique-relation list) and
        accumulated into ``grads[name]``, an array over unique relations.
        Returns the gradient on the side's input rows.
        """
        g = grad_out
        flat = inv.reshape(-1)
        lead = inv.shape

        def scatter(buf, vals, trailing):
            vals = _sum_to(vals, lead + vals.shape[vals.ndim - trailing:])
            np.add.at(buf, flat, vals.reshape((-1,) + vals.shape[len(lead):]))

        if head and self.translation is not None:
            scatter(grads["translation"], g, 2)
        for name, j, x, dot, v, tau in reversed(tape):
            gdot = np.sum(g * v, axis=-1)
            scale = 2.0 if tau is None else tau
            # y = x - scale <x,v> v
            gv = -(scale * dot)[..., None] * g - (scale * gdot)[..., None] * x
            key = "rotation" if tau is None else f"{name}_axes"
            scatter(grads[key][:, :, j, :], gv, 2)
            if tau is not None:
                scatter(grads[f"{name}_taus"][:, :, j], -dot * gdot, 1)
            g = g - (scale * gdot)[..., None] * v
        return g

    def new_relation_grads(self, n_uniq):
        """Zeroed per-unique-relation gradient buffers (normalized-vector space)."""
        grads = {}
        for name in RELATION_PARAMS:
            arr = getattr(self, name)
            if arr is not None and arr.size:
                grads[name] = np.zeros((n_uniq,) + arr.shape[1:])
        return grads

    def finish_relation_grads(self, grads, units):
        """Map gradients on unit vectors back to the raw parameters."""
        for name in ("rotation", "head_axes", "tail_axes"):
            if name in grads:
                unit, norms = units[name]
                grads[name] = _unit_backward(grads[name], unit, norms)
        return grads


def _sum_to(arr, shape):
    """Sum ``arr`` over the axes that were broadcast up from ``shape``."""
    if arr.shape == shape:
        return arr
    lead = arr.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and arr.shape[i + lead] != 1)
    return arr.sum(axis=axes, keepdims=True).reshape(shape)


def row_distance(z):
    """``sum_i ||z[..., i, :]||_2`` over the ``d`` rows."""
    return np.sqrt(np.sum(z * z, axis=-1)).sum(axis=-1)


def init_parameters(config: ModelConfig, gamma: float = DEFAULT_GAMMA) -> HousEModel:
    """Fresh parameters, deterministic in ``config.seed``.

    Entity rows are uniform in ``[-beta, beta]`` with
    ``beta = (gamma + 2) / (d k)``; reflection vectors and projection axes are
    standard Gaussian; projection scalars are ``N(0, 0.01^2)`` so that the
    initial projections are close to the identity; translations start at 0.
    """
    c = config
    rng = np.random.default_rng(c.seed)
    R, d, k, m = c.num_relations, c.d, c.k, c.m
    beta = (gamma + 2.0) / (d * k)
    entity = rng.uniform(-beta, beta, size=(c.num_entities, d, k))
    rotation = rng.standard_normal((R, d, 2 * c.n, k))
    kwargs = {}
    if c.variant.has_projection and m > 0:
        kwargs["head_axes"] = rng.standard_normal((R, d, m, k))
        kwargs["head_taus"] = 0.01 * rng.standard_normal((R, d, m))
        kwargs["tail_axes"] = rng.standard_normal((R, d, m, k))
        kwargs["tail_taus"] = 0.01 * rng.standard_normal((R, d, m))
    if c.variant.has_translation:
        kwargs["translation"] = np.zeros((R, d, k))
    return HousEModel(c, entity, rotation, **kwargs)
