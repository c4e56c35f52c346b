"""Shared fixtures and independent oracles for the test suite.

The expensive end-to-end runs (the flagship experiment, the flagship
horofunction schedule) are session-scoped so the acceptance criteria and the
module tests share one execution.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import nbodylab as nb
from nbodylab.experiments import (
    build_direction_sequence,
    estimate_horofunction,
    flagship_preset,
    partially_hyperbolic_experiment,
)
from nbodylab.minimizer import MinimizeOptions


def random_collisionless(rng, n, d, box=2.0, min_sep=0.5):
    """Random configuration with all mutual distances at least min_sep."""
    for _ in range(1000):
        x = rng.uniform(-box, box, (n, d))
        if n < 2 or nb.min_mutual_distance(x) >= min_sep:
            return x
    raise RuntimeError("could not sample a well-separated configuration")


def newton_rhs(m):
    """Right-hand side of Newton's equations for use with scipy directly.

    Kept independent of the package kernels so integrations made with it act
    as an external oracle.
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.size

    def rhs(t, y):
        d = y.size // (2 * n)
        x = y[: n * d].reshape(n, d)
        v = y[n * d:]
        acc = np.zeros_like(x)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                diff = x[j] - x[i]
                acc[i] += m[j] * diff / np.linalg.norm(diff) ** 3
        return np.concatenate([v, acc.reshape(-1)])

    return rhs


def exact_arc(x0, v0, m, tau, k, rtol=1e-12):
    """DiscretePath sampled from a high-accuracy scipy integration (oracle)."""
    x0 = np.asarray(x0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    times = np.linspace(0.0, tau, k + 1)
    sol = solve_ivp(
        newton_rhs(m), (0.0, tau),
        np.concatenate([x0.reshape(-1), v0.reshape(-1)]),
        method="DOP853", rtol=rtol, atol=rtol, t_eval=times,
    )
    assert sol.status == 0
    nodes = sol.y.T[:, : x0.size].reshape(k + 1, *x0.shape)
    return nb.DiscretePath(times, nodes, m)


# a mildly eccentric bound two-body arc reused by several oracle tests
KEPLER_M = np.array([1.0, 1.0])
KEPLER_X0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
KEPLER_V0 = np.array([[0.0, 0.55], [0.0, -0.55]])
KEPLER_TAU = 3.0


@pytest.fixture(scope="session")
def kepler_arc():
    return exact_arc(KEPLER_X0, KEPLER_V0, KEPLER_M, KEPLER_TAU, 1600)


@pytest.fixture(scope="session")
def flagship():
    return flagship_preset()


@pytest.fixture(scope="session")
def flagship_sequence(flagship):
    return build_direction_sequence(
        flagship["b"], flagship["masses"], flagship["h"],
        flagship["eps_schedule"], flagship["perturb"],
    )


@pytest.fixture(scope="session")
def flagship_opts():
    return MinimizeOptions(k0=64, refinements=4)


@pytest.fixture(scope="session")
def flagship_report(flagship, flagship_sequence, flagship_opts):
    """The full partially-hyperbolic limit experiment on the flagship preset."""
    return partially_hyperbolic_experiment(
        flagship["x0"], flagship_sequence,
        lambda n: flagship["lambda_c"] / flagship["eps_schedule"][n],
        flagship["horizon"], flagship_opts,
        cluster_rel_tol=flagship["cluster_rel_tol"],
    )


@pytest.fixture(scope="session")
def flagship_horofn(flagship, flagship_sequence, flagship_opts):
    """Horofunction schedule on the flagship preset with two probes."""
    probes = [
        np.array([[0.2, 1.1], [-0.8, -0.9], [0.6, -0.2]]),
        np.array([[-1.0, 0.5], [0.3, -1.2], [0.7, 0.7]]),
    ]
    lambdas = [flagship["lambda_c"] / e for e in flagship["eps_schedule"]]
    report = estimate_horofunction(
        probes, flagship["x0"], flagship_sequence, lambdas, flagship_opts
    )
    return report
