"""Discrete paths and the action functionals defined on them.

A path is a uniform time grid with one configuration per node.  Velocities are
implicit (finite differences): the variational unknown is the node set.  The
quadrature is trapezoidal in the potential and exact for the piecewise-linear
kinetic energy, giving O(dt^2) consistency on smooth curves.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import COLLISION_REL_TOL, as_configuration, as_masses
from .errors import CollisionError

# Relative non-uniformity allowed in a path's time grid.
_GRID_RTOL = 1e-9


@dataclass
class DiscretePath:
    """Uniform time grid plus node configurations.

    times: (K+1,) strictly increasing, uniform spacing.
    nodes: (K+1, N, d).
    masses: (N,).
    """

    times: np.ndarray
    nodes: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        self.nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        self.masses = as_masses(self.masses)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("a path needs at least two time stamps (K >= 1)")
        if self.nodes.ndim != 3 or self.nodes.shape[0] != self.times.size:
            raise ValueError("nodes must be (K+1, N, d) matching times")
        if self.nodes.shape[1] != self.masses.size:
            raise ValueError("nodes and masses disagree on N")
        steps = np.diff(self.times)
        if np.any(steps <= 0):
            raise ValueError("time stamps must be strictly increasing")
        dt = steps[0]
        if np.any(np.abs(steps - dt) > _GRID_RTOL * dt):
            raise ValueError("time grid must be uniform")
        if not np.all(np.isfinite(self.nodes)):
            raise ValueError("node entries must be finite")

    @property
    def k_intervals(self):
        return self.times.size - 1

    @property
    def dt(self):
        return float((self.times[-1] - self.times[0]) / self.k_intervals)

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @property
    def n_bodies(self):
        return self.nodes.shape[1]

    @property
    def dim(self):
        return self.nodes.shape[2]

    def reversed(self):
        """Path traversed backwards on the same grid."""
        return DiscretePath(self.times.copy(), self.nodes[::-1].copy(), self.masses)

    def to_json_dict(self):
        return {
            "masses": self.masses.tolist(),
            "dim": int(self.dim),
            "times": self.times.tolist(),
            "nodes": [node.reshape(-1).tolist() for node in self.nodes],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, obj):
        masses = np.asarray(obj["masses"], dtype=np.float64)
        dim = int(obj["dim"])
        times = np.asarray(obj["times"], dtype=np.float64)
        nodes = np.asarray(obj["nodes"], dtype=np.float64).reshape(
            times.size, masses.size, dim
        )
        return cls(times, nodes, masses)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


def path_from_endpoints(x, y, tau, k_intervals, m, t0=0.0):
    """Straight mass-metric segment from x to y on a uniform K-interval grid."""
    x = as_configuration(x)
    y = as_configuration(y, n_bodies=x.shape[0], dim=x.shape[1])
    if tau <= 0:
        raise ValueError("duration must be positive")
    s = np.linspace(0.0, 1.0, k_intervals + 1)
    nodes = x[None] * (1.0 - s)[:, None, None] + y[None] * s[:, None, None]
    times = t0 + s * tau
    return DiscretePath(times, nodes, m)


def _node_collision_scale(nodes):
    spread = float(np.max(nodes) - np.min(nodes)) if nodes.size else 0.0
    return max(spread, np.finfo(float).tiny)


def _check_nodes(nodes, dmin):
    tol = COLLISION_REL_TOL * _node_collision_scale(nodes)
    bad = np.nonzero(dmin <= tol)[0]
    if bad.size:
        k = int(bad[0])
        raise CollisionError(f"path node {k} has a collided pair", node=k)


def _kinetic_sum(nodes, m, dt):
    step = nodes[1:] - nodes[:-1]
    seg2 = np.einsum("i,kid,kid->k", m, step, step)
    return float(seg2.sum()) / (2.0 * dt), seg2


def action_value(nodes, m, dt, check=True):
    """Discrete Newtonian action of raw node data (no DiscretePath overhead)."""
    U, dmin = kernels.path_potentials(nodes, m)
    if check:
        _check_nodes(nodes, dmin)
    kin, _ = _kinetic_sum(nodes, m, dt)
    pot = dt * float(0.5 * (U[:-1] + U[1:]).sum())
    return kin + pot


def action_fixed_time(p):
    """Discrete action A_L of a path: kinetic + trapezoidal potential."""
    return action_value(p.nodes, p.masses, p.dt)


def action_supercritical(p, h):
    """A_L(p) + h * duration, defined for energy level h >= 0."""
    if h < 0:
        raise ValueError("energy level must be nonnegative")
    return action_fixed_time(p) + h * p.duration


def action_value_and_gradient(nodes, m, dt, check=True):
    """Action plus its mass-metric gradient at the interior nodes.

    Gradient at interior node k: (2 x_k - x_{k-1} - x_{k+1}) / dt + dt * grad U(x_k).
    Returns (A, grad (K-1, N, d), interior_dmin).
    """
    U, grad_U, dmin = kernels.path_potential_gradients(nodes, m)
    if check:
        _check_nodes(nodes, dmin)
    kin, _ = _kinetic_sum(nodes, m, dt)
    pot = dt * float(0.5 * (U[:-1] + U[1:]).sum())
    g = (2.0 * nodes[1:-1] - nodes[:-2] - nodes[2:]) / dt + dt * grad_U[1:-1]
    interior_dmin = float(dmin[1:-1].min()) if dmin.size > 2 else np.inf
    return kin + pot, g, interior_dmin


def action_gradient(p):
    """Mass-metric first variation of action_fixed_time at the interior nodes."""
    if p.k_intervals < 2:
        return np.zeros((0, p.n_bodies, p.dim))
    _, g, _ = action_value_and_gradient(p.nodes, p.masses, p.dt)
    return g


def jm_length(p, h):
    """Jacobi-Maupertuis length at level h with the matching trapezoid rule.

    Per interval: |x_{k+1} - x_k|_m * (sqrt(2(h+U_k)) + sqrt(2(h+U_{k+1}))) / 2,
    which never exceeds that interval's supercritical action (AM-GM).
    """
    if h < 0:
        raise ValueError("energy level must be nonnegative")
    U, dmin = kernels.path_potentials(p.nodes, p.masses)
    _check_nodes(p.nodes, dmin)
    _, seg2 = _kinetic_sum(p.nodes, p.masses, p.dt)
    seg = np.sqrt(seg2)
    speed_factor = np.sqrt(2.0 * (h + U))
    return float((seg * 0.5 * (speed_factor[:-1] + speed_factor[1:])).sum())


def path_energy_profile(p):
    """Per-interval energy estimate |dx|_m^2 / (2 dt^2) - U(interval midpoint)."""
    mids = 0.5 * (p.nodes[:-1] + p.nodes[1:])
    U_mid, dmin = kernels.path_potentials(np.ascontiguousarray(mids), p.masses)
    _check_nodes(mids, dmin)
    _, seg2 = _kinetic_sum(p.nodes, p.masses, p.dt)
    return seg2 / (2.0 * p.dt**2) - U_mid
