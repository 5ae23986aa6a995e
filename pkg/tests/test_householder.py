import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from housekg.householder import (
    DegenerateVectorError,
    DimensionError,
    NonInvertibleError,
    NotARotationError,
    apply_projection_chain,
    apply_rotation_chain,
    compose_rotation_chains,
    decompose_rotation,
    invert_projection_chain,
    invert_rotation_chain,
    materialize_projection,
    materialize_rotation,
    normalize,
    project,
    projection_chain,
    random_rotation,
    reflect,
    rotation_chain_length,
)
from housekg.properties import run_properties

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def vectors(k):
    return arrays(np.float64, k, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


@st.composite
def vector_pairs(draw, min_k=2, max_k=8):
    k = draw(st.integers(min_k, max_k))
    return draw(vectors(k)), draw(vectors(k))


# -- reflect -------------------------------------------------------------------


def test_reflect_flips_along_axis():
    np.testing.assert_allclose(reflect([1, 0], [3, 4]), [-3, 4])


def test_reflect_ignores_axis_scale():
    np.testing.assert_allclose(reflect([0, 5], [3, 4]), [3, -4])


def test_reflect_fixes_orthogonal_vector():
    np.testing.assert_allclose(reflect([1, 1], [1, -1]), [1, -1], atol=1e-15)


def test_reflect_rejects_degenerate_axis():
    with pytest.raises(DegenerateVectorError):
        reflect([1e-13, 0.0], [1.0, 2.0])


def test_reflect_rejects_dimension_mismatch():
    with pytest.raises(DimensionError):
        reflect([1.0, 0.0, 0.0], [1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(vector_pairs())
def test_reflect_is_involution_and_isometry(pair):
    u, x = pair
    y = reflect(u, x)
    np.testing.assert_allclose(reflect(u, y), x, atol=1e-9)
    assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x), rel=1e-12, abs=1e-12)


def test_normalize_unit_length():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8])


# -- rotation chains -----------------------------------------------------------


def test_two_reflections_rotate_by_twice_the_angle():
    # axes 45 degrees apart: 90 degree rotation taking e1 to e2
    chain = np.array([[0.0, 1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(apply_rotation_chain(chain, [1.0, 0.0]), [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(materialize_rotation(chain), [[0, -1], [1, 0]], atol=1e-15)


def test_materialize_requires_even_nonempty_chain():
    with pytest.raises(NotARotationError):
        materialize_rotation(np.ones((3, 4)))
    with pytest.raises(NotARotationError):
        materialize_rotation(np.zeros((0, 4)))


@pytest.mark.parametrize("k", range(2, 13))
def test_materialized_chain_is_special_orthogonal(k):
    rng = np.random.default_rng(k)
    for _ in range(20):
        Q = materialize_rotation(rng.standard_normal((rotation_chain_length(k), k)))
        np.testing.assert_allclose(Q.T @ Q, np.eye(k), atol=1e-12)
        assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-12)


def test_inverse_chain_undoes_rotation():
    rng = np.random.default_rng(0)
    chain = rng.standard_normal((4, 5))
    x = rng.standard_normal(5)
    back = apply_rotation_chain(invert_rotation_chain(chain), apply_rotation_chain(chain, x))
    np.testing.assert_allclose(back, x, atol=1e-12)


def test_composition_applies_first_chain_first():
    rng = np.random.default_rng(1)
    c1, c2 = rng.standard_normal((2, 4, 4))
    Q = materialize_rotation(compose_rotation_chains(c1, c2))
    np.testing.assert_allclose(Q, materialize_rotation(c2) @ materialize_rotation(c1), atol=1e-12)


def test_composed_rotations_commute_in_two_dimensions():
    rng = np.random.default_rng(2)
    c1, c2 = rng.standard_normal((2, 2, 2))
    np.testing.assert_allclose(materialize_rotation(compose_rotation_chains(c1, c2)),
                               materialize_rotation(compose_rotation_chains(c2, c1)), atol=1e-12)


def test_angle_pi_rotation_is_symmetric():
    # a half-turn equals its own inverse, the rotation behind symmetric relations
    chain = np.array([[1.0, 0.0], [0.0, 1.0]])
    Q = materialize_rotation(chain)
    np.testing.assert_allclose(Q, -np.eye(2), atol=1e-15)
    np.testing.assert_allclose(Q @ Q, np.eye(2), atol=1e-15)


# -- decomposition -------------------------------------------------------------


def test_decompose_identity_uses_padding():
    chain = decompose_rotation(np.eye(3))
    np.testing.assert_array_equal(chain, [[1, 0, 0], [1, 0, 0]])


def test_decompose_quarter_turn():
    Q = np.array([[0.0, -1.0], [1.0, 0.0]])
    chain = decompose_rotation(Q)
    assert chain.shape == (2, 2)
    np.testing.assert_allclose(materialize_rotation(chain), Q, atol=1e-14)


@pytest.mark.parametrize("k", range(2, 9))
def test_decompose_round_trip(k):
    rng = np.random.default_rng(100 + k)
    for _ in range(30):
        Q = random_rotation(k, rng)
        chain = decompose_rotation(Q)
        assert len(chain) == 2 * (k // 2)
        assert np.linalg.norm(materialize_rotation(chain) - Q) <= 1e-10


def test_decompose_rejects_reflection():
    with pytest.raises(NotARotationError, match="det"):
        decompose_rotation(np.diag([1.0, 1.0, -1.0]))


def test_decompose_rejects_non_orthogonal():
    with pytest.raises(NotARotationError):
        decompose_rotation(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_decompose_rejects_non_square():
    with pytest.raises(NotARotationError):
        decompose_rotation(np.eye(3)[:2])


# -- projections ---------------------------------------------------------------


def test_tau_zero_is_identity():
    np.testing.assert_allclose(project([1, 2], 0.0, [3, -1]), [3, -1])


def test_tau_one_drops_axis_component():
    np.testing.assert_allclose(project([1, 0], 1.0, [3, 4]), [0, 4])


def test_tau_two_is_reflection():
    rng = np.random.default_rng(3)
    p, x = rng.standard_normal((2, 4))
    np.testing.assert_allclose(project(p, 2.0, x), reflect(p, x), atol=1e-14)


def test_projection_inverse_scalar_map():
    chain = projection_chain([[1.0, 0.0]], [0.5])
    inv = invert_projection_chain(chain)
    assert inv.taus[0] == pytest.approx(-1.0)
    x = np.array([2.0, 3.0])
    np.testing.assert_allclose(apply_projection_chain(inv, apply_projection_chain(chain, x)), x)


def test_projection_tau_one_is_not_invertible():
    with pytest.raises(NonInvertibleError):
        invert_projection_chain(projection_chain([[0.0, 1.0], [1.0, 0.0]], [0.3, 1.0]))


def test_empty_projection_chain_is_identity():
    chain = projection_chain(np.zeros((0, 3)), [], k=3)
    np.testing.assert_array_equal(apply_projection_chain(chain, [1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_array_equal(materialize_projection(chain), np.eye(3))


def test_projection_determinant_is_product():
    rng = np.random.default_rng(4)
    taus = np.array([0.3, -1.2, 2.5])
    W = materialize_projection(projection_chain(rng.standard_normal((3, 5)), taus))
    assert np.linalg.det(W) == pytest.approx(np.prod(1 - taus), rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8).flatmap(lambda k: st.tuples(vectors(k), vectors(k), vectors(k))),
       st.floats(-3, 3))
def test_distance_change_law(vecs, tau):
    a, b, p = vecs
    diff = a - b
    s2 = diff @ diff
    cos2 = (diff @ p) ** 2 / (s2 * (p @ p)) if s2 > 0 else 0.0
    moved = project(p, tau, a) - project(p, tau, b)
    assert moved @ moved == pytest.approx(s2 + (tau ** 2 - 2 * tau) * s2 * cos2,
                                          rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_projection_chain_inverse_property(k, m, seed):
    rng = np.random.default_rng(seed)
    taus = rng.uniform(-3, 3, m)
    taus[np.abs(taus - 1) < 1e-3] = 0.5
    chain = projection_chain(rng.standard_normal((m, k)), taus)
    W = materialize_projection(invert_projection_chain(chain)) @ materialize_projection(chain)
    np.testing.assert_allclose(W, np.eye(k), atol=1e-8)


@pytest.mark.parametrize("k", [2, 3, 8])
def test_property_suite_passes(k):
    results = run_properties(k, trials=50)
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
