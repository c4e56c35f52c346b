"""High-accuracy integration of the Newtonian equations with energy monitoring.

Uses an adaptive high-order embedded Runge-Kutta pair (DOP853).  Integrations
stop early when the smallest mutual distance falls below a guard radius or the
step size collapses; the last accepted time then stands in for the finite
right endpoint of the maximal interval of definition.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .core import (
    as_configuration,
    as_masses,
    check_collisionless,
    diameter,
    mass_inner,
    potential,
)
from .errors import CollisionError, EnergyDriftError


class Termination(str, Enum):
    HORIZON = "horizon"
    COLLISION_GUARD = "collision_guard"
    STEP_UNDERFLOW = "step_underflow"


@dataclass
class State:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = as_configuration(self.x)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.v.shape != self.x.shape:
            raise ValueError("velocity shape must match configuration shape")


@dataclass
class Trajectory:
    times: np.ndarray            # (T,)
    xs: np.ndarray               # (T, N, d)
    vs: np.ndarray               # (T, N, d)
    masses: np.ndarray
    h: float                     # energy at the first sample
    omega_plus: float            # inf sentinel for "no finite endpoint found"
    terminated_by: Termination
    energies: np.ndarray = None  # (T,)

    def __post_init__(self):
        if self.energies is None:
            self.energies = np.array(
                [energy_xv(self.xs[i], self.vs[i], self.masses)
                 for i in range(len(self.times))]
            )

    @property
    def n_bodies(self):
        return self.xs.shape[1]

    @property
    def dim(self):
        return self.xs.shape[2]

    def state(self, i):
        return State(self.xs[i].copy(), self.vs[i].copy(), float(self.times[i]))

    def energy_drift(self):
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def pair_distance(self, i, j):
        return np.linalg.norm(self.xs[:, i] - self.xs[:, j], axis=-1)

    def to_csv(self, path_or_buf):
        n, d = self.n_bodies, self.dim
        cols = ["t"]
        cols += [f"x{i}_{c}" for i in range(n) for c in range(d)]
        cols += [f"v{i}_{c}" for i in range(n) for c in range(d)]
        cols += ["energy"]
        rows = np.column_stack(
            [self.times, self.xs.reshape(len(self.times), -1),
             self.vs.reshape(len(self.times), -1), self.energies]
        )
        close = False
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            buf.write(",".join(cols) + "\n")
            for row in rows:
                buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        finally:
            if close:
                buf.close()

    def to_json_dict(self):
        return {
            "masses": self.masses.tolist(),
            "dim": int(self.dim),
            "times": self.times.tolist(),
            "positions": [x.reshape(-1).tolist() for x in self.xs],
            "velocities": [v.reshape(-1).tolist() for v in self.vs],
            "energies": self.energies.tolist(),
            "h": self.h,
            "omega_plus": None if np.isinf(self.omega_plus) else self.omega_plus,
            "terminated_by": self.terminated_by.value,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, obj):
        masses = np.asarray(obj["masses"], dtype=np.float64)
        dim = int(obj["dim"])
        times = np.asarray(obj["times"], dtype=np.float64)
        shape = (times.size, masses.size, dim)
        return cls(
            times=times,
            xs=np.asarray(obj["positions"], dtype=np.float64).reshape(shape),
            vs=np.asarray(obj["velocities"], dtype=np.float64).reshape(shape),
            masses=masses,
            h=float(obj["h"]),
            omega_plus=np.inf if obj["omega_plus"] is None else float(obj["omega_plus"]),
            terminated_by=Termination(obj["terminated_by"]),
            energies=np.asarray(obj["energies"], dtype=np.float64),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


def energy_xv(x, v, m):
    """Total energy |v|_m^2 / 2 - U(x)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    m = np.ascontiguousarray(m, dtype=np.float64)
    U, dmin = kernels.path_potentials(x[None], m)
    if not np.isfinite(U[0]) and x.shape[0] >= 2:
        raise CollisionError("energy undefined at a collision")
    return 0.5 * mass_inner(v, v, m) - float(U[0])


def energy(s, m):
    """Energy of a State (kinetic minus potential in the mass metric)."""
    check_collisionless(s.x)
    return energy_xv(s.x, s.v, m)


def integrate(s0, m, t_end, rtol=1e-10, t_eval=None, guard=None,
              drift_tol=None, atol=None):
    """Integrate Newton's equations from s0 up to t_end.

    Stops early (collision_guard) when the minimum mutual distance crosses the
    guard radius, or (step_underflow) when the adaptive step collapses; the
    last accepted time becomes omega_plus.  Raises EnergyDriftError when the
    relative energy drift of the accepted samples exceeds the tolerance.
    """
    m = as_masses(m)
    if not isinstance(s0, State):
        raise TypeError("s0 must be a State")
    if t_end <= s0.t:
        raise ValueError("t_end must exceed the initial time")
    check_collisionless(s0.x)
    n, d = s0.x.shape
    if guard is None:
        guard = 1e-9 * max(diameter(s0.x), 1e-30)

    def rhs(t, y):
        x = y[: n * d].reshape(n, d)
        v = y[n * d:]
        _, g, _ = kernels.path_potential_gradients(
            np.ascontiguousarray(x)[None], m
        )
        return np.concatenate([v, g[0].reshape(-1)])

    def guard_event(t, y):
        x = y[: n * d].reshape(n, d)
        dmin, _, _ = kernels.min_pair_distance(np.ascontiguousarray(x))
        return dmin - guard

    guard_event.terminal = True
    guard_event.direction = -1

    y0 = np.concatenate([s0.x.reshape(-1), s0.v.reshape(-1)])
    if atol is None:
        atol = rtol * max(1.0, float(np.max(np.abs(y0))))
    events = [guard_event] if n >= 2 else None
    sol = solve_ivp(
        rhs, (s0.t, t_end), y0, method="DOP853", rtol=rtol, atol=atol,
        t_eval=t_eval, events=events, dense_output=False,
    )

    if sol.status == 1:
        terminated = Termination.COLLISION_GUARD
        omega_plus = float(sol.t_events[0][0])
    elif sol.status == 0:
        terminated = Termination.HORIZON
        omega_plus = np.inf
    else:
        terminated = Termination.STEP_UNDERFLOW
        omega_plus = float(sol.t[-1]) if sol.t.size else s0.t

    times = sol.t
    ys = sol.y.T
    if times.size == 0:
        times = np.array([s0.t])
        ys = y0[None]
    xs = np.ascontiguousarray(ys[:, : n * d].reshape(-1, n, d))
    vs = np.ascontiguousarray(ys[:, n * d:].reshape(-1, n, d))

    energies = np.empty(times.size)
    for i in range(times.size):
        U, dmin = kernels.path_potentials(xs[i][None], m)
        energies[i] = 0.5 * mass_inner(vs[i], vs[i], m) - float(U[0])
    e0 = energies[0]
    drift = float(np.max(np.abs(energies - e0)))
    tol = drift_tol if drift_tol is not None else max(1e-9, 10.0 * rtol) * max(1.0, abs(e0))
    if terminated == Termination.HORIZON and drift > tol:
        raise EnergyDriftError(
            f"energy drift {drift:.3e} exceeds tolerance {tol:.3e}",
            drift=drift, tolerance=tol,
        )

    return Trajectory(
        times=times, xs=xs, vs=vs, masses=m, h=float(e0),
        omega_plus=omega_plus, terminated_by=terminated, energies=energies,
    )


def fitted_initial_velocity(p):
    """Initial velocity of a discrete path by a 4th-order one-sided difference."""
    if p.k_intervals < 4:
        raise ValueError("need at least 4 intervals to fit the initial velocity")
    n = p.nodes
    return (-25.0 * n[0] + 48.0 * n[1] - 36.0 * n[2] + 16.0 * n[3] - 3.0 * n[4]) / (
        12.0 * p.dt
    )


def shoot_and_compare(p, rtol=1e-10):
    """Integrate from the path's start with the fitted initial velocity.

    Returns the mass-metric distance between the integrated endpoint and the
    path's final node, normalized by the endpoint scale.  Diagnostic only: no
    convergence requirement on the input path.
    """
    v0 = fitted_initial_velocity(p)
    s0 = State(p.nodes[0].copy(), v0, float(p.times[0]))
    tr = integrate(s0, p.masses, float(p.times[-1]), rtol=rtol,
                   t_eval=np.array([p.times[0], p.times[-1]]),
                   drift_tol=np.inf)
    diff = tr.xs[-1] - p.nodes[-1]
    scale = max(
        np.sqrt(mass_inner(p.nodes[-1] - p.nodes[0], p.nodes[-1] - p.nodes[0], p.masses)),
        1e-30,
    )
    return float(np.sqrt(mass_inner(diff, diff, p.masses))) / scale
