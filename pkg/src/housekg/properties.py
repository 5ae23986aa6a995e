"""Randomized numerical checks of the reflection/projection kernels.

Each check returns ``(passed, worst_error)`` for one dimension ``k``; the CLI
``test-props`` command and the test suite both run them.
"""

from dataclasses import dataclass

import numpy as np

from .householder import (
    NonInvertibleError,
    apply_projection_chain,
    apply_rotation_chain,
    compose_rotation_chains,
    decompose_rotation,
    invert_projection_chain,
    invert_rotation_chain,
    materialize_projection,
    materialize_rotation,
    project,
    projection_chain,
    random_chain,
    random_rotation,
    reflect,
    rotation_chain_length,
)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    worst: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\tworst={self.worst:.3e}\ttol={self.tolerance:.0e}"


def _random_taus(rng, size, low=-3.0, high=3.0, gap=(0.999, 1.001)):
    taus = rng.uniform(low, high, size)
    bad = (taus > gap[0]) & (taus < gap[1])
    while bad.any():
        taus[bad] = rng.uniform(low, high, int(bad.sum()))
        bad = (taus > gap[0]) & (taus < gap[1])
    return taus


def rotation_validity(k, rng, trials):
    """Materialized chains are orthogonal with determinant +1."""
    L = rotation_chain_length(k)
    worst = 0.0
    for _ in range(trials):
        Q = materialize_rotation(random_chain(L, k, rng))
        worst = max(worst, np.abs(Q.T @ Q - np.eye(k)).max(), abs(np.linalg.det(Q) - 1.0))
    return worst


def decomposition_round_trip(k, rng, trials):
    """Random rotations factor into exactly ``2 * (k // 2)`` reflections."""
    L = rotation_chain_length(k)
    worst = 0.0
    for _ in range(trials):
        Q = random_rotation(k, rng)
        chain = decompose_rotation(Q)
        if len(chain) != L:
            return np.inf
        worst = max(worst, np.linalg.norm(materialize_rotation(chain) - Q))
    return worst


def path_equivalence(k, rng, trials):
    """Folding reflections over a vector equals multiplying by the matrix."""
    L = rotation_chain_length(k)
    worst = 0.0
    for _ in range(trials):
        chain = random_chain(L, k, rng)
        x = rng.standard_normal(k)
        worst = max(worst, np.abs(apply_rotation_chain(chain, x)
                                  - materialize_rotation(chain) @ x).max())
    return worst


def projection_inverse(k, rng, trials):
    """A projection chain followed by its inverse chain is the identity."""
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(1, 5))
        chain = projection_chain(rng.standard_normal((m, k)), _random_taus(rng, m))
        inv = invert_projection_chain(chain)
        W = materialize_projection(inv) @ materialize_projection(chain)
        worst = max(worst, np.abs(W - np.eye(k)).max())
    try:
        invert_projection_chain(projection_chain(rng.standard_normal((1, k)), [1.0]))
    except NonInvertibleError:
        return worst
    return np.inf


def distance_change_law(k, rng, trials):
    """Projecting ``a`` and ``b`` rescales the component of ``a - b`` along ``p``.

    With ``s = ||a - b||`` and ``theta`` the angle between ``a - b`` and
    ``p``: ``s'^2 = s^2 + (tau^2 - 2 tau) s^2 cos^2 theta``.
    """
    worst = 0.0
    for _ in range(trials):
        a, b, p = rng.standard_normal((3, k))
        tau = rng.uniform(-3, 3)
        diff = a - b
        s2 = diff @ diff
        cos2 = (diff @ p) ** 2 / (s2 * (p @ p))
        moved = project(p, tau, a) - project(p, tau, b)
        predicted = s2 + (tau * tau - 2 * tau) * s2 * cos2
        worst = max(worst, abs(moved @ moved - predicted) / max(1.0, s2))
    return worst


def reflection_involution(k, rng, trials):
    worst = 0.0
    for _ in range(trials):
        u, x = rng.standard_normal((2, k))
        worst = max(worst, np.abs(reflect(u, reflect(u, x)) - x).max())
    return worst


def rotation_inverse(k, rng, trials):
    """The reversed chain undoes the chain; composing chains multiplies matrices."""
    L = rotation_chain_length(k)
    worst = 0.0
    for _ in range(trials):
        c1, c2 = random_chain(L, k, rng), random_chain(L, k, rng)
        x = rng.standard_normal(k)
        back = apply_rotation_chain(invert_rotation_chain(c1), apply_rotation_chain(c1, x))
        both = materialize_rotation(compose_rotation_chains(c1, c2))
        worst = max(worst, np.abs(back - x).max(),
                    np.abs(both - materialize_rotation(c2) @ materialize_rotation(c1)).max())
    return worst


def norm_preservation(k, rng, trials):
    L = rotation_chain_length(k)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(k)
        y = apply_rotation_chain(random_chain(L, k, rng), x)
        worst = max(worst, abs(np.linalg.norm(y) - np.linalg.norm(x)))
    return worst


def projection_path_equivalence(k, rng, trials):
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(1, 5))
        chain = projection_chain(rng.standard_normal((m, k)), rng.uniform(-3, 3, m))
        x = rng.standard_normal(k)
        worst = max(worst, np.abs(apply_projection_chain(chain, x)
                                  - materialize_projection(chain) @ x).max())
    return worst


CHECKS = (
    ("rotation_validity", rotation_validity, 1e-9),
    ("decomposition_round_trip", decomposition_round_trip, 1e-8),
    ("path_equivalence", path_equivalence, 1e-10),
    ("projection_inverse", projection_inverse, 1e-9),
    ("distance_change_law", distance_change_law, 1e-9),
    ("reflection_involution", reflection_involution, 1e-12),
    ("rotation_inverse_and_composition", rotation_inverse, 1e-10),
    ("norm_preservation", norm_preservation, 1e-10),
    ("projection_path_equivalence", projection_path_equivalence, 1e-10),
)


def run_properties(k: int, trials: int = 200, seed: int = 0):
    """Run every check for dimension ``k``; returns a list of :class:`PropertyResult`."""
    if k < 2:
        raise ValueError("k must be >= 2")
    results = []
    for i, (name, fn, tol) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, k, i])
        worst = float(fn(k, rng, trials))
        results.append(PropertyResult(name, worst <= tol, worst, tol))
    return results
