"""Mass-metric geometry, the Newtonian potential, and its gradient."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nbodylab as nb
from nbodylab.core import as_configuration, as_masses, check_collisionless, closest_pair
from nbodylab.errors import CollisionError

from conftest import random_collisionless


def naive_mass_inner(x, y, m):
    total = 0.0
    for i in range(len(m)):
        for c in range(x.shape[1]):
            total += m[i] * x[i, c] * y[i, c]
    return total


def naive_potential(x, m):
    total = 0.0
    n = len(m)
    for i in range(n):
        for j in range(i + 1, n):
            total += m[i] * m[j] / np.linalg.norm(x[i] - x[j])
    return total


finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


def config_strategy(n=3, d=2):
    return st.lists(
        st.lists(finite, min_size=d, max_size=d), min_size=n, max_size=n
    ).map(lambda rows: np.array(rows))


mass_strategy = st.lists(
    st.floats(0.1, 10.0, allow_nan=False), min_size=3, max_size=3
).map(np.array)


# ---------------------------------------------------------------------------
# mass inner product


def test_mass_inner_single_body():
    assert nb.mass_inner(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]),
                         np.array([2.0])) == 2.0


def test_mass_inner_orthogonal():
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    y = np.array([[0.0, 3.0], [-1.0, 0.0]])
    assert nb.mass_inner(x, y, np.array([1.0, 4.0])) == 0.0


def test_mass_inner_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.standard_normal((4, 3))
        y = rng.standard_normal((4, 3))
        m = rng.uniform(0.1, 5.0, 4)
        assert nb.mass_inner(x, y, m) == pytest.approx(
            naive_mass_inner(x, y, m), rel=1e-14
        )


def test_mass_inner_shape_mismatch():
    with pytest.raises(ValueError):
        nb.mass_inner(np.zeros((2, 2)), np.zeros((3, 2)), np.ones(2))


@settings(max_examples=60, deadline=None)
@given(config_strategy(), config_strategy(), config_strategy(), mass_strategy,
       st.floats(-3.0, 3.0, allow_nan=False), st.floats(-3.0, 3.0, allow_nan=False))
def test_mass_inner_symmetric_bilinear(x, y, z, m, a, b):
    assert nb.mass_inner(x, y, m) == pytest.approx(nb.mass_inner(y, x, m), abs=1e-12)
    lhs = nb.mass_inner(a * x + b * y, z, m)
    rhs = a * nb.mass_inner(x, z, m) + b * nb.mass_inner(y, z, m)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(rhs)))


@settings(max_examples=60, deadline=None)
@given(config_strategy(), mass_strategy)
def test_mass_inner_positive_definite(x, m):
    q = nb.mass_inner(x, x, m)
    assert q >= 0.0
    if np.any(x != 0.0):
        assert q > 0.0


# ---------------------------------------------------------------------------
# potential


def test_potential_two_bodies_distance_two():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert nb.potential(x, np.array([1.0, 1.0])) == pytest.approx(0.5, rel=1e-15)


def test_potential_equilateral_triangle():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert nb.potential(x, np.ones(3)) == pytest.approx(3.0, rel=1e-14)


def test_potential_homogeneity():
    rng = np.random.default_rng(1)
    x = random_collisionless(rng, 3, 2)
    m = rng.uniform(0.5, 2.0, 3)
    assert nb.potential(3.0 * x, m) == pytest.approx(
        nb.potential(x, m) / 3.0, rel=1e-14
    )


def test_potential_translation_rotation_invariance():
    rng = np.random.default_rng(2)
    x = random_collisionless(rng, 4, 2)
    m = rng.uniform(0.5, 2.0, 4)
    u0 = nb.potential(x, m)
    assert nb.potential(x + np.array([3.0, -7.0]), m) == pytest.approx(u0, rel=1e-13)
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    assert nb.potential(x @ rot.T, m) == pytest.approx(u0, rel=1e-13)


def test_potential_naive_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = random_collisionless(rng, 4, 3)
        m = rng.uniform(0.1, 5.0, 4)
        assert nb.potential(x, m) == pytest.approx(naive_potential(x, m), rel=1e-14)


def test_potential_collision_raises_with_pair():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(CollisionError) as exc:
        nb.potential(x, np.ones(3))
    assert exc.value.pair == (0, 1)


# ---------------------------------------------------------------------------
# potential gradient


def test_gradient_two_body_hand_value():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    g = nb.potential_gradient(x, np.array([1.0, 1.0]))
    np.testing.assert_allclose(g, [[-0.25, 0.0], [0.25, 0.0]], atol=1e-15)


def test_gradient_euler_identity_and_zero_total_force():
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = random_collisionless(rng, 3, 2)
        m = rng.uniform(0.5, 2.0, 3)
        g = nb.potential_gradient(x, m)
        u = nb.potential(x, m)
        assert abs(nb.mass_inner(g, x, m) + u) <= 1e-12 * abs(u)
        total = np.einsum("i,id->d", m, g)
        np.testing.assert_allclose(total, 0.0, atol=1e-12)


def test_gradient_finite_differences():
    rng = np.random.default_rng(5)
    x = random_collisionless(rng, 3, 2)
    m = rng.uniform(0.5, 2.0, 3)
    g = nb.potential_gradient(x, m)
    step = 1e-6
    for i in range(3):
        for c in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, c] += step
            xm[i, c] -= step
            fd = (nb.potential(xp, m) - nb.potential(xm, m)) / (2 * step)
            # kernels return the mass-metric gradient: euclidean / m_i
            assert g[i, c] == pytest.approx(fd / m[i], rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------------------
# center of mass, distances, lagrangian


def test_center_of_mass_examples():
    assert np.allclose(
        nb.center_of_mass(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.ones(2)), 0.0
    )
    np.testing.assert_allclose(
        nb.center_of_mass(np.array([[1.0, 2.0]]), np.array([3.0])), [3.0, 6.0]
    )


def test_center_of_mass_linearity():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3, 2))
    y = rng.standard_normal((3, 2))
    m = rng.uniform(0.5, 2.0, 3)
    lhs = nb.center_of_mass(2.0 * x + 0.3 * y, m)
    rhs = 2.0 * nb.center_of_mass(x, m) + 0.3 * nb.center_of_mass(y, m)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_center_of_mass_translation_rule():
    x = np.array([[0.5, 1.0], [2.0, -1.0]])
    m = np.array([1.0, 3.0])
    c = np.array([0.7, -0.2])
    np.testing.assert_allclose(
        nb.center_of_mass(x + c, m),
        nb.center_of_mass(x, m) + m.sum() * c,
        atol=1e-14,
    )


def test_min_mutual_distance():
    assert nb.min_mutual_distance(np.zeros((2, 2))) == 0.0
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert nb.min_mutual_distance(tri) == pytest.approx(1.0, rel=1e-15)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 3))
    naive = min(
        np.linalg.norm(x[i] - x[j]) for i in range(5) for j in range(i + 1, 5)
    )
    assert nb.min_mutual_distance(x) == naive
    d, i, j = closest_pair(np.array([[0.0, 0.0]]))
    assert np.isinf(d) and (i, j) == (-1, -1)


def test_lagrangian():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    m = np.ones(2)
    assert nb.lagrangian(x, np.zeros_like(x), m) == pytest.approx(0.5)
    far = np.array([[1e8, 0.0], [-1e8, 0.0]])
    val = nb.lagrangian(far, np.zeros_like(far), m)
    assert 0.0 < val < 1e-7
    rng = np.random.default_rng(8)
    v = rng.standard_normal((2, 2))
    expected = 0.5 * naive_mass_inner(v, v, m) + naive_potential(x, m)
    assert nb.lagrangian(x, v, m) == pytest.approx(expected, rel=1e-14)


def test_validation_helpers():
    with pytest.raises(ValueError):
        as_masses([1.0, -1.0])
    with pytest.raises(ValueError):
        as_masses([])
    with pytest.raises(ValueError):
        as_configuration(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        as_configuration(np.array([[np.inf, 0.0]]))
    # near-coincident pair relative to the diameter counts as a collision
    x = np.array([[0.0, 0.0], [1e-15, 0.0], [1.0, 0.0]])
    with pytest.raises(CollisionError):
        check_collisionless(x)
