"""Fixed-time and free-time minimization and the interior-collision check."""

import numpy as np
import pytest

import nbodylab as nb
from nbodylab.action import action_fixed_time, path_from_endpoints
from nbodylab.errors import CollisionError
from nbodylab.minimizer import MinimizeOptions

from conftest import (
    KEPLER_M,
    KEPLER_TAU,
    KEPLER_V0,
    KEPLER_X0,
    exact_arc,
    random_collisionless,
)

FAST = MinimizeOptions(k0=32, refinements=2, n_starts=3)


def test_options_validation():
    with pytest.raises(ValueError):
        MinimizeOptions(k0=4)
    with pytest.raises(ValueError):
        MinimizeOptions(grad_tol=0.0)
    with pytest.raises(ValueError):
        MinimizeOptions(barrier_eps=-1.0)


# ---------------------------------------------------------------------------
# fixed-time


def test_single_body_free_particle():
    x = np.array([[0.0, 0.0]])
    y = np.array([[3.0, 4.0]])
    res = nb.minimize_fixed(x, y, 1.0, np.array([1.0]), FAST)
    assert res.converged
    assert res.value == pytest.approx(25.0 / 2.0, rel=1e-10)
    mid = res.path.nodes[res.path.k_intervals // 2]
    np.testing.assert_allclose(mid, [[1.5, 2.0]], atol=1e-8)


def test_two_body_matches_exact_arc_action():
    arc = exact_arc(KEPLER_X0, KEPLER_V0, KEPLER_M, KEPLER_TAU, 1600)
    exact_value = action_fixed_time(arc)
    res = nb.minimize_fixed(
        KEPLER_X0, arc.nodes[-1], KEPLER_TAU, KEPLER_M,
        MinimizeOptions(k0=100, refinements=4),
    )
    assert res.converged
    assert res.value == pytest.approx(exact_value, rel=1e-4)


def test_same_endpoints_short_time_near_constant():
    rng = np.random.default_rng(0)
    x = random_collisionless(rng, 3, 2, min_sep=1.0)
    m = np.ones(3)
    tau = 1e-3
    res = nb.minimize_fixed(x, x, tau, m, FAST)
    upper = nb.potential(x, m) * tau
    assert res.value <= upper + 1e-6
    assert upper - res.value <= 1e-6


def test_stationarity_of_converged_results():
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = random_collisionless(rng, 3, 2)
        y = random_collisionless(rng, 3, 2)
        res = nb.minimize_fixed(x, y, 2.0, np.ones(3), FAST)
        if res.converged:
            assert res.grad_norm <= FAST.grad_tol


def test_endpoint_collision_rejected():
    x = np.array([[0.0, 0.0], [0.0, 0.0]])
    y = np.array([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(ValueError):
        nb.minimize_fixed(x, y, 1.0, np.ones(2), FAST)
    with pytest.raises(ValueError):
        nb.minimize_fixed(y, y, -1.0, np.ones(2), FAST)


def test_shooting_consistency():
    # a converged minimizer is a true motion: integrate from its fitted
    # initial velocity and land on the final node
    res = nb.minimize_fixed(
        KEPLER_X0, np.array([[2.0, 1.0], [-2.0, -1.0]]), 3.0, KEPLER_M,
        MinimizeOptions(k0=100, refinements=4),
    )
    assert res.converged
    assert nb.shoot_and_compare(res.path) <= 1e-3


# ---------------------------------------------------------------------------
# refine


def test_refine_doubles_grid_preserving_geometry():
    p = path_from_endpoints(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]),
                            1.0, 8, np.array([1.0]))
    q = nb.refine(p)
    assert q.k_intervals == 16
    np.testing.assert_allclose(q.nodes[0::2], p.nodes, atol=1e-15)
    # refine twice equals one 4x refinement on the shared stamps
    r = nb.refine(nb.refine(p))
    np.testing.assert_allclose(r.nodes[0::4], p.nodes, atol=1e-15)


def test_refine_action_change_is_second_order():
    arc = exact_arc(KEPLER_X0, KEPLER_V0, KEPLER_M, KEPLER_TAU, 100)
    a0 = action_fixed_time(arc)
    a1 = action_fixed_time(nb.refine(arc))
    assert abs(a1 - a0) < 1e-3 * abs(a0)


# ---------------------------------------------------------------------------
# interior collision check


def test_collision_check_single_body_sentinel():
    p = path_from_endpoints(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]),
                            1.0, 8, np.array([1.0]))
    chk = nb.check_interior_collisionfree(p, 1e-3)
    assert chk.ok and np.isinf(chk.min_distance)


def test_collision_check_reports_pair_and_node():
    nodes = np.array([
        [[1.0, 0.0], [-1.0, 0.0]],
        [[0.5, 0.0], [-0.5, 0.0]],
        [[1e-13, 0.0], [-1e-13, 0.0]],
        [[1.0, 0.0], [-1.0, 0.0]],
    ])
    p = nb.DiscretePath(np.linspace(0, 3, 4), nodes, np.ones(2))
    chk = nb.check_interior_collisionfree(p, 1e-3)
    assert not chk.ok
    assert chk.pair == (0, 1)
    assert chk.node == 2


def test_converged_minimizer_is_interior_collisionfree():
    res = nb.minimize_fixed(
        KEPLER_X0, np.array([[0.0, 2.0], [0.0, -2.0]]), 3.0, KEPLER_M, FAST
    )
    assert res.converged
    scale = 2.0
    assert nb.check_interior_collisionfree(res.path, 1e-3 * scale).ok


# ---------------------------------------------------------------------------
# free time


def test_free_time_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        nb.minimize_free_time(KEPLER_X0, 2 * KEPLER_X0, 0.0, KEPLER_M, FAST)


def test_free_time_degenerate_endpoints():
    res = nb.minimize_free_time(KEPLER_X0, KEPLER_X0, 0.5, KEPLER_M, FAST)
    assert res.degenerate
    assert res.value <= 1e-4
    assert res.converged


def test_free_time_energy_criterion_and_value_bound():
    res = nb.minimize_free_time(
        KEPLER_X0, np.array([[4.0, 1.0], [-4.0, -1.0]]), 0.5, KEPLER_M,
        MinimizeOptions(k0=64, refinements=3),
    )
    assert res.converged
    assert res.energy_residual <= 1e-3
    assert res.energy_std <= 1e-3
    # the returned value never exceeds any sampled g(tau)
    assert res.value <= min(g for _, g in res.samples) + 1e-9


def test_free_time_geodesic_equivalence():
    res = nb.minimize_free_time(
        KEPLER_X0, np.array([[3.0, 2.0], [-3.0, -2.0]]), 0.5, KEPLER_M,
        MinimizeOptions(k0=64, refinements=3),
    )
    assert res.converged
    assert abs(nb.jm_length(res.path, 0.5) - res.value) <= 1e-4 * res.value


def test_free_time_tau_grid_oracle():
    # brute-force scan over tau with the same inner solver
    x = KEPLER_X0
    y = np.array([[2.5, 1.5], [-2.5, -1.5]])
    h = 0.5
    opts = MinimizeOptions(k0=64, refinements=2)
    res = nb.minimize_free_time(x, y, h, KEPLER_M, opts)
    taus = np.geomspace(0.3 * res.tau_star, 3.0 * res.tau_star, 60)
    best = np.inf
    init = None
    scan_opts = MinimizeOptions(k0=64, refinements=2, n_starts=1)
    for tau in taus:
        r = nb.minimize_fixed(x, y, tau, KEPLER_M, scan_opts, initial=init)
        init = r.path
        best = min(best, r.value + h * tau)
    assert res.value <= best + 1e-4 * abs(best)


def test_free_time_triangle_inequality():
    rng = np.random.default_rng(2)
    m = np.ones(2)
    opts = MinimizeOptions(k0=32, refinements=2, n_starts=2)
    x = random_collisionless(rng, 2, 2, min_sep=1.0)
    y = random_collisionless(rng, 2, 2, min_sep=1.0) + np.array([5.0, 0.0])
    z = random_collisionless(rng, 2, 2, min_sep=1.0) + np.array([0.0, 5.0])
    xz = nb.minimize_free_time(x, z, 0.5, m, opts).value
    xy = nb.minimize_free_time(x, y, 0.5, m, opts).value
    yz = nb.minimize_free_time(y, z, 0.5, m, opts).value
    assert xz <= xy + yz + 1e-6
