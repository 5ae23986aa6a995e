"""Householder reflections, modified Householder projections and their chains.

Conventions used throughout the package:

* A *rotation chain* is an ``(L, k)`` array of raw (unnormalized) reflection
  vectors.  Row 0 is applied first, so the chain acts on ``x`` as
  ``H(u_L) ... H(u_2) H(u_1) x``.
* A *projection chain* is a :class:`ProjectionChain` of ``m`` raw axes and
  ``m`` scalars, applied in the same index order.

Raw vectors are normalized at application time.  Everything here works in
float64 and is side-effect free.
"""

from typing import NamedTuple

import numpy as np

MIN_NORM = 1e-12
TAU_SINGULAR_TOL = 1e-9
ROTATION_TOL = 1e-8


class DimensionError(ValueError):
    pass


class DegenerateVectorError(ValueError):
    pass


class NonInvertibleError(ValueError):
    pass


class NotARotationError(ValueError):
    pass


class ProjectionChain(NamedTuple):
    axes: np.ndarray  # (m, k) raw axes
    taus: np.ndarray  # (m,)

    @property
    def k(self) -> int:
        return self.axes.shape[1]

    def __len__(self) -> int:
        return len(self.taus)


def projection_chain(axes, taus, k=None) -> ProjectionChain:
    """Build a :class:`ProjectionChain` from array-likes.

    ``k`` is only needed for the empty chain, whose axes cannot carry it.
    """
    taus = np.asarray(taus, dtype=np.float64).reshape(-1)
    axes = np.asarray(axes, dtype=np.float64)
    if taus.size == 0:
        width = k if k is not None else (axes.shape[-1] if axes.ndim == 2 else 0)
        return ProjectionChain(np.zeros((0, width)), taus)
    axes = axes.reshape(len(taus), -1)
    return ProjectionChain(axes, taus)


def normalize(raw) -> np.ndarray:
    """Unit vector along ``raw``; refuses vectors with norm below 1e-12."""
    raw = np.asarray(raw, dtype=np.float64)
    norm = np.linalg.norm(raw)
    if not norm >= MIN_NORM:
        raise DegenerateVectorError(f"vector norm {norm:.3g} is below {MIN_NORM}")
    return raw / norm


def _check_dims(v, x):
    if v.ndim != 1 or x.ndim != 1 or v.shape != x.shape:
        raise DimensionError(f"dimension mismatch: {v.shape} vs {x.shape}")


def reflect(u, x) -> np.ndarray:
    """Reflect ``x`` about the hyperplane orthogonal to ``u``."""
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dims(u, x)
    u = normalize(u)
    return x - 2.0 * np.dot(x, u) * u


def project(p, tau, x) -> np.ndarray:
    """Apply the modified Householder matrix ``I - tau p p^T`` to ``x``."""
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dims(p, x)
    p = normalize(p)
    return x - float(tau) * np.dot(x, p) * p


def _as_chain(chain) -> np.ndarray:
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim != 2:
        raise DimensionError(f"a reflection chain must be 2-D, got shape {chain.shape}")
    return chain


def apply_rotation_chain(chain, x) -> np.ndarray:
    """Fold :func:`reflect` over the chain, first row first."""
    chain = _as_chain(chain)
    x = np.asarray(x, dtype=np.float64)
    for u in chain:
        x = reflect(u, x)
    return x


def apply_projection_chain(chain: ProjectionChain, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(chain) == 0:
        if chain.axes.shape[1] not in (0, x.shape[-1]):
            raise DimensionError(f"dimension mismatch: {chain.axes.shape[1]} vs {x.shape}")
        return x.copy()
    for p, tau in zip(chain.axes, chain.taus):
        x = project(p, tau, x)
    return x


def materialize_rotation(chain) -> np.ndarray:
    """The k x k matrix ``H(u_L) ... H(u_1)`` with the same action as the chain."""
    chain = _as_chain(chain)
    if len(chain) == 0 or len(chain) % 2:
        raise NotARotationError(
            f"a rotation needs a nonempty even number of reflections, got {len(chain)}")
    k = chain.shape[1]
    Q = np.eye(k)
    for u in chain:
        u = normalize(u)
        Q = Q - 2.0 * np.outer(u, u @ Q)
    return Q


def materialize_projection(chain: ProjectionChain) -> np.ndarray:
    k = chain.axes.shape[1]
    W = np.eye(k)
    for p, tau in zip(chain.axes, chain.taus):
        p = normalize(p)
        W = W - tau * np.outer(p, p @ W)
    return W


def invert_rotation_chain(chain) -> np.ndarray:
    """Each reflection is an involution, so the inverse is the reversed chain."""
    return _as_chain(chain)[::-1].copy()


def invert_projection_chain(chain: ProjectionChain) -> ProjectionChain:
    """Inverse of a projection chain.

    ``(I - tau pp^T)^{-1} = I - tau/(tau-1) pp^T`` for unit ``p``, so the
    inverse chain is the reversed chain with every scalar mapped through
    ``tau -> tau / (tau - 1)``.
    """
    taus = np.asarray(chain.taus, dtype=np.float64)
    bad = np.abs(taus - 1.0) <= TAU_SINGULAR_TOL
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonInvertibleError(f"tau[{idx}] = {taus[idx]!r} makes the projection singular")
    return ProjectionChain(chain.axes[::-1].copy(), (taus / (taus - 1.0))[::-1].copy())


def compose_rotation_chains(*chains) -> np.ndarray:
    """Chain applying ``chains[0]`` first, then ``chains[1]``, and so on."""
    return np.concatenate([_as_chain(c) for c in chains], axis=0)


def _householder_vector(x):
    """Unit ``v`` with ``H(v) x = ||x|| e_1``, or None when ``x`` is already there."""
    alpha = np.linalg.norm(x)
    tail = np.dot(x[1:], x[1:])
    if alpha == 0.0 or tail <= (1e-30 * alpha) ** 2:
        if x[0] >= 0:
            return None
        v = np.zeros_like(x)
        v[0] = 1.0
        return v
    v = x.copy()
    # x[0] - alpha without cancellation when x[0] > 0
    if x[0] > 0:
        v[0] = -tail / (x[0] + alpha)
    else:
        v[0] = x[0] - alpha
    return v / np.linalg.norm(v)


def decompose_rotation(Q) -> np.ndarray:
    """Factor a rotation matrix into exactly ``2 * (k // 2)`` reflections.

    Householder QR triangularizes ``Q`` with at most ``k - 1`` reflections,
    leaving ``diag(1, ..., 1, +-1)``; a ``-1`` is absorbed by one more
    reflection about ``e_k``.  The result is returned in application order and
    padded with ``[e_1, e_1]`` pairs up to the full count.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 2:
        raise NotARotationError(f"expected a square matrix with k >= 2, got {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise NotARotationError("matrix has non-finite entries")
    k = Q.shape[0]
    orth_err = np.linalg.norm(Q.T @ Q - np.eye(k))
    det = np.linalg.det(Q)
    if orth_err >= ROTATION_TOL or abs(det - 1.0) >= ROTATION_TOL:
        raise NotARotationError(
            f"not a rotation: ||Q^T Q - I||_F = {orth_err:.3g}, det = {det:.12g}")

    A = Q.copy()
    factors = []  # Q = H(f_1) H(f_2) ... H(f_L)
    for j in range(k - 1):
        v = _householder_vector(A[j:, j])
        if v is None:
            continue
        u = np.zeros(k)
        u[j:] = v
        A = A - 2.0 * np.outer(u, u @ A)
        factors.append(u)
    if A[k - 1, k - 1] < 0:
        e_k = np.zeros(k)
        e_k[-1] = 1.0
        factors.append(e_k)

    target = 2 * (k // 2)
    if len(factors) % 2:
        raise NotARotationError("odd reflection count; determinant is not +1")
    chain = factors[::-1]
    e_1 = np.zeros(k)
    e_1[0] = 1.0
    while len(chain) < target:
        chain.extend([e_1, e_1])
    return np.array(chain)


def random_rotation(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random rotation: QR of a Gaussian matrix, sign-fixed, det forced to +1."""
    Z = rng.standard_normal((k, k))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_chain(length: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((length, k))


def rotation_chain_length(k: int) -> int:
    return 2 * (k // 2)

