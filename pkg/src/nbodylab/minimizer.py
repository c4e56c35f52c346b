"""Fixed-time and free-time action minimization on discrete paths.

The inner solver is a limited-memory quasi-Newton descent on the interior
nodes with a backtracking line search.  It works in mass-orthonormal
coordinates (z_i = sqrt(m_i) x_i) and preconditions with the exact inverse of
the kinetic-term Hessian (a tridiagonal solve), which keeps the iteration
count essentially independent of the grid size.  Steps that would push any
interior pair below the near-collision guard distance are rejected (step
halved), never penalized: the objective itself is left untouched.

The free-time solve minimizes g(tau) = phi(x, y, tau) + h tau by a
golden-section search with warm-started inner solves, then polishes tau at the
finest grid with a secant iteration on the mean-energy residual (stationarity
in tau is equivalent to mean path energy h).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .action import (
    DiscretePath,
    action_supercritical,
    action_value_and_gradient,
    path_energy_profile,
    path_from_endpoints,
)
from .core import (
    as_configuration,
    as_masses,
    check_collisionless,
    diameter,
    mass_distance,
    potential,
)
from .errors import BracketError, CollisionError


@dataclass
class MinimizeOptions:
    k0: int = 64                  # initial node count (intervals)
    refinements: int = 2          # number of mesh doublings
    grad_tol: float = 1e-7        # mass-metric gradient norm at convergence
    max_iters: int = 600          # iteration cap per solve level
    barrier_eps: float = None     # near-collision guard; None -> 1e-6 * scale
    n_starts: int = 5             # 1 straight line + randomized bumps
    n_polish: int = 2             # coarse candidates carried through refinement
    seed: int = 0
    memory: int = 10              # L-BFGS history length

    def __post_init__(self):
        if self.k0 < 8:
            raise ValueError("k0 must be at least 8")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.barrier_eps is not None and self.barrier_eps < 0:
            raise ValueError("barrier_eps must be nonnegative")


@dataclass
class FixedTimeResult:
    path: DiscretePath
    value: float
    grad_norm: float
    converged: bool
    min_interior_distance: float
    iterations: int = 0
    start_index: int = 0

    def to_json_dict(self):
        return {
            "value": self.value,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "min_interior_distance": self.min_interior_distance,
            "path": self.path.to_json_dict(),
        }


@dataclass
class FreeTimeResult:
    path: DiscretePath
    tau_star: float
    value: float
    energy_residual: float
    converged: bool
    energy_std: float = 0.0
    degenerate: bool = False
    grad_norm: float = np.inf
    samples: list = field(default_factory=list)  # (tau, value + h*tau) pairs seen

    def to_json_dict(self):
        return {
            "value": self.value,
            "tau_star": self.tau_star,
            "energy_residual": self.energy_residual,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "path": self.path.to_json_dict(),
        }


@dataclass
class CollisionCheck:
    ok: bool
    min_distance: float
    pair: tuple = None
    node: int = None
    time: float = None


# ---------------------------------------------------------------------------
# inner solver


def _kinetic_preconditioner(k_interior, dt):
    """Factor the kinetic Hessian (1/dt) tridiag(-1, 2, -1) once per level."""
    ab = np.zeros((2, k_interior))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    cb = cholesky_banded(ab, lower=False)

    def solve(g2d):
        return dt * cho_solve_banded((cb, False), g2d)

    return solve


class _PathObjective:
    """Action and gradient in mass-orthonormal interior-node coordinates."""

    def __init__(self, x, y, tau, k, m):
        self.m = m
        self.sqrt_m = np.sqrt(m)[None, :, None]
        self.x = x
        self.y = y
        self.tau = float(tau)
        self.k = int(k)
        self.dt = self.tau / self.k
        self.n, self.d = x.shape
        self.nodes = np.empty((k + 1, self.n, self.d))
        self.nodes[0] = x
        self.nodes[-1] = y

    def interior_to_z(self, interior_nodes):
        return (interior_nodes * self.sqrt_m).reshape(self.k - 1, -1)

    def z_to_interior(self, z):
        return z.reshape(self.k - 1, self.n, self.d) / self.sqrt_m

    def evaluate(self, z):
        """Returns (f, grad_z (k-1, n*d), interior_dmin)."""
        self.nodes[1:-1] = self.z_to_interior(z)
        f, g, dmin = action_value_and_gradient(
            self.nodes, self.m, self.dt, check=False
        )
        gz = (g * self.sqrt_m).reshape(self.k - 1, -1)
        return f, gz, dmin

    def path(self, z, t0=0.0):
        self.nodes[1:-1] = self.z_to_interior(z)
        times = t0 + np.linspace(0.0, self.tau, self.k + 1)
        return DiscretePath(times, self.nodes.copy(), self.m)


def _lbfgs(obj, z0, precond, grad_tol, max_iters, barrier, memory):
    """Guarded preconditioned L-BFGS. Returns (z, f, gnorm, iters, converged)."""
    z = z0.copy()
    f, g, dmin = obj.evaluate(z)
    if not np.isfinite(f):
        return z, f, np.inf, 0, False
    # Never forbid the starting point itself; guard against going below it.
    barrier = min(barrier, 0.5 * dmin) if np.isfinite(dmin) else barrier
    s_hist, y_hist, rho_hist = [], [], []
    gnorm = float(np.linalg.norm(g))
    iters = 0
    while iters < max_iters:
        if gnorm <= grad_tol:
            return z, f, gnorm, iters, True
        # two-loop recursion with tridiagonal-inverse H0
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * float(np.sum(s * q))
            alphas.append(a)
            q -= a * y
        r = precond(q)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * float(np.sum(y * r))
            r += (a - b) * s
        p = -r
        slope = float(np.sum(g * p))
        if not np.isfinite(slope) or slope >= 0:
            s_hist, y_hist, rho_hist = [], [], []
            p = -precond(g)
            slope = float(np.sum(g * p))
        # backtracking Armijo with collision-guard step rejection
        step = 1.0
        accepted = False
        for _ in range(50):
            z_new = z + step * p
            f_new, g_new, dmin_new = obj.evaluate(z_new)
            guarded = np.isfinite(f_new) and dmin_new > barrier
            if guarded and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        iters += 1
        if not accepted:
            if s_hist:
                s_hist, y_hist, rho_hist = [], [], []
                continue
            return z, f, gnorm, iters, gnorm <= grad_tol
        s_vec = z_new - z
        y_vec = g_new - g
        sy = float(np.sum(s_vec * y_vec))
        if sy > 1e-12 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        df = f - f_new
        z, f, g = z_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        if df <= 1e-16 * (1.0 + abs(f)):
            return z, f, gnorm, iters, gnorm <= grad_tol
    return z, f, gnorm, iters, gnorm <= grad_tol


def _solve_at_level(x, y, tau, k, m, opts, barrier, init_interior, t0=0.0):
    """One inner solve at a fixed grid size from a given interior initializer."""
    obj = _PathObjective(x, y, tau, k, m)
    precond = _kinetic_preconditioner(k - 1, obj.dt)
    z0 = obj.interior_to_z(init_interior)
    z, f, gnorm, iters, conv = _lbfgs(
        obj, z0, precond, opts.grad_tol, opts.max_iters, barrier, opts.memory
    )
    nodes = obj.nodes.copy()
    nodes[1:-1] = obj.z_to_interior(z)
    return nodes, f, gnorm, iters, conv


def _bump_perturbation(rng, k, n, d, amplitude):
    """Smooth C^1 interior perturbation vanishing at the endpoints."""
    s = np.linspace(0.0, 1.0, k + 1)[1:-1]
    pert = np.zeros((k - 1, n, d))
    for q in (1, 2):
        coeff = rng.standard_normal((n, d))
        pert += np.sin(q * np.pi * s)[:, None, None] * coeff[None]
    norm = np.max(np.abs(pert)) or 1.0
    return pert * (amplitude / norm)


def refine(p):
    """Mesh doubling: K -> 2K uniform grid, new nodes by linear interpolation."""
    k = p.k_intervals
    times = np.linspace(p.times[0], p.times[-1], 2 * k + 1)
    nodes = np.empty((2 * k + 1,) + p.nodes.shape[1:])
    nodes[0::2] = p.nodes
    nodes[1::2] = 0.5 * (p.nodes[:-1] + p.nodes[1:])
    return DiscretePath(times, nodes, p.masses)


def _resample_interior(nodes_from, k_to):
    """Linear-in-time resampling of a node set onto a new uniform grid."""
    k_from = nodes_from.shape[0] - 1
    s = np.linspace(0.0, 1.0, k_to + 1)[1:-1] * k_from
    lo = np.floor(s).astype(int)
    frac = (s - lo)[:, None, None]
    return nodes_from[lo] * (1.0 - frac) + nodes_from[lo + 1] * frac


def minimize_fixed(x, y, tau, m, opts=None, initial=None, t0=0.0):
    """Local minimizer of the discrete fixed-endpoint action in time tau.

    Multi-start (straight segment + randomized bump perturbations) runs at the
    coarse grid; the best candidates are continued through the refinement
    schedule.  Global minimality is not certified.
    """
    opts = opts or MinimizeOptions()
    m = as_masses(m)
    x = as_configuration(x, n_bodies=m.size)
    y = as_configuration(y, n_bodies=m.size, dim=x.shape[1])
    if tau <= 0:
        raise ValueError("tau must be positive")
    if m.size >= 2 and x.shape[1] < 2:
        raise ValueError("interior-collision-free minimization requires dimension >= 2")
    try:
        check_collisionless(x)
        check_collisionless(y)
    except CollisionError as exc:
        raise ValueError(f"endpoint configuration has a collision: {exc}") from exc

    scale = max(diameter(x), diameter(y), mass_distance(x, y, m), 1e-30)
    barrier = opts.barrier_eps if opts.barrier_eps is not None else 1e-6 * scale
    rng = np.random.default_rng(opts.seed)
    k = opts.k0

    starts = []
    straight = path_from_endpoints(x, y, tau, k, m).nodes[1:-1]
    starts.append(straight)
    if initial is not None:
        init_nodes = initial.nodes if isinstance(initial, DiscretePath) else initial
        starts.insert(0, _resample_interior(np.asarray(init_nodes), k))
    if x.shape[1] >= 2 and m.size >= 2:
        for _ in range(max(0, opts.n_starts - 1)):
            starts.append(straight + _bump_perturbation(
                rng, k, m.size, x.shape[1], 0.1 * scale))

    coarse = []
    for idx, init in enumerate(starts):
        try:
            nodes, f, gnorm, iters, conv = _solve_at_level(
                x, y, tau, k, m, opts, barrier, init, t0
            )
        except (CollisionError, FloatingPointError):
            continue
        if np.isfinite(f):
            coarse.append((f, idx, nodes, gnorm, iters, conv))
    if not coarse:
        raise CollisionError("every start collided or diverged at the coarse level")
    coarse.sort(key=lambda item: (item[0], item[1]))

    best = None
    for f, idx, nodes, gnorm, iters, conv in coarse[: max(1, opts.n_polish)]:
        k_fine = k
        total_iters = iters
        for _ in range(opts.refinements):
            k_fine *= 2
            init = _resample_interior(nodes, k_fine)
            nodes_new = np.empty((k_fine + 1,) + x.shape)
            nodes_new[0], nodes_new[-1] = x, y
            nodes, f, gnorm, iters, conv = _solve_at_level(
                x, y, tau, k_fine, m, opts, barrier, init, t0
            )
            total_iters += iters
        cand = (f, idx, nodes, gnorm, total_iters, conv, k_fine)
        if best is None or cand[0] < best[0] - 1e-14 * (1 + abs(best[0])):
            best = cand

    f, idx, nodes, gnorm, total_iters, conv, k_fine = best
    times = t0 + np.linspace(0.0, tau, k_fine + 1)
    path = DiscretePath(times, nodes, m)
    if m.size >= 2 and k_fine >= 2:
        per_node = _interior_min_distances(nodes)
        min_interior = float(per_node.min()) if per_node.size else np.inf
    else:
        min_interior = np.inf
    return FixedTimeResult(
        path=path,
        value=float(f),
        grad_norm=float(gnorm),
        converged=bool(conv),
        min_interior_distance=min_interior,
        iterations=int(total_iters),
        start_index=int(idx),
    )


def _interior_min_distances(nodes):
    from . import kernels

    interior = np.ascontiguousarray(nodes[1:-1])
    if interior.shape[0] == 0 or interior.shape[1] < 2:
        return np.array([])
    _, dmin = kernels.path_potentials(interior, np.ones(interior.shape[1]))
    return dmin


def check_interior_collisionfree(p, delta):
    """True iff every interior node keeps all mutual distances >= delta."""
    if p.n_bodies < 2 or p.k_intervals < 2:
        return CollisionCheck(ok=True, min_distance=np.inf)
    from . import kernels

    worst = np.inf
    worst_pair, worst_node = None, None
    for k in range(1, p.k_intervals):
        d, i, j = kernels.min_pair_distance(np.ascontiguousarray(p.nodes[k]))
        if d < worst:
            worst, worst_pair, worst_node = float(d), (int(i), int(j)), k
    return CollisionCheck(
        ok=worst >= delta,
        min_distance=worst,
        pair=worst_pair,
        node=worst_node,
        time=float(p.times[worst_node]) if worst_node is not None else None,
    )


# ---------------------------------------------------------------------------
# free-time solve


def _coarse_opts(opts):
    return MinimizeOptions(
        k0=opts.k0,
        refinements=0,
        grad_tol=opts.grad_tol,
        max_iters=opts.max_iters,
        barrier_eps=opts.barrier_eps,
        n_starts=opts.n_starts,
        n_polish=1,
        seed=opts.seed,
        memory=opts.memory,
    )


def _warm_opts(opts, refinements=0):
    return MinimizeOptions(
        k0=opts.k0,
        refinements=refinements,
        grad_tol=opts.grad_tol,
        max_iters=opts.max_iters,
        barrier_eps=opts.barrier_eps,
        n_starts=1,
        n_polish=1,
        seed=opts.seed,
        memory=opts.memory,
    )


def minimize_free_time(x, y, h, m, opts=None):
    """Approximate the free-time critical potential phi_h(x, y) for h > 0.

    Raises BracketError when g(tau) has no interior minimum on the (expanded)
    search range, and ValueError for h <= 0 (the infimum may not be attained
    at the critical level).
    """
    opts = opts or MinimizeOptions()
    m = as_masses(m)
    x = as_configuration(x, n_bodies=m.size)
    y = as_configuration(y, n_bodies=m.size, dim=x.shape[1])
    if h <= 0:
        raise ValueError("free-time minimization requires a strictly positive energy level")
    check_collisionless(x)
    check_collisionless(y)

    ell = mass_distance(x, y, m)
    scale = max(diameter(x), diameter(y), 1.0)
    if ell <= 1e-9 * scale:
        return _degenerate_free_time(x, h, m, opts)

    U_max = max(potential(x, m), potential(y, m)) if m.size >= 2 else 0.0
    lo = ell / np.sqrt(2.0 * (h + U_max))
    hi = 4.0 * ell / np.sqrt(2.0 * h)

    cache = []  # (tau, value, path)
    samples = []

    def g_of(tau, warm_refinements=0):
        for tau_c, val_c, path_c in cache:
            if abs(tau_c - tau) < 1e-14 * tau:
                return val_c + h * tau
        initial = None
        if cache:
            nearest = min(cache, key=lambda item: abs(np.log(item[0] / tau)))
            initial = nearest[2]
            res = minimize_fixed(x, y, tau, m, _warm_opts(opts, warm_refinements),
                                 initial=initial)
        else:
            res = minimize_fixed(x, y, tau, m, _coarse_opts(opts))
        cache.append((tau, res.value, res.path))
        g = res.value + h * tau
        samples.append((float(tau), float(g)))
        return g

    lo, hi = _bracket(g_of, lo, hi)
    tau_star = _golden(g_of, lo, hi, rel_tol=1e-4)

    # full refinement at tau_star, then secant on the mean-energy residual
    best_path = min(cache, key=lambda item: abs(item[0] - tau_star))[2]
    fine = minimize_fixed(
        x, y, tau_star, m, _warm_opts(opts, refinements=opts.refinements),
        initial=best_path,
    )

    k_fine = opts.k0 * 2**opts.refinements
    flat_opts = _warm_opts(opts, 0)
    flat_opts.k0 = k_fine

    def fine_solve(tau, init_path):
        return minimize_fixed(x, y, tau, m, flat_opts, initial=init_path)

    def energy_residual_of(res):
        prof = path_energy_profile(res.path)
        return float(prof.mean() - h), prof

    res_a = fine
    f_a, prof = energy_residual_of(res_a)
    tau_a = tau_star
    if abs(f_a) > 1e-5:
        tau_b = tau_a * (1.0 + np.clip(f_a / (2.0 * h), -0.2, 0.2) * 0.5 + 1e-3)
        res_b = fine_solve(tau_b, res_a.path)
        f_b, _ = energy_residual_of(res_b)
        for _ in range(8):
            if abs(f_b) <= 1e-6 or f_b == f_a:
                break
            tau_new = tau_b - f_b * (tau_b - tau_a) / (f_b - f_a)
            if not np.isfinite(tau_new) or tau_new <= 0:
                break
            tau_new = float(np.clip(tau_new, 0.5 * tau_b, 2.0 * tau_b))
            res_new = fine_solve(tau_new, res_b.path)
            f_new, _ = energy_residual_of(res_new)
            tau_a, f_a, res_a = tau_b, f_b, res_b
            tau_b, f_b, res_b = tau_new, f_new, res_new
            if abs(tau_b - tau_a) <= 1e-12 * tau_b:
                break
        res_a, f_a = res_b, f_b
        _, prof = energy_residual_of(res_a)
        samples.append((float(res_a.path.duration),
                        float(res_a.value + h * res_a.path.duration)))

    value = action_supercritical(res_a.path, h)
    energy_residual = abs(f_a)
    return FreeTimeResult(
        path=res_a.path,
        tau_star=float(res_a.path.duration),
        value=float(value),
        energy_residual=float(energy_residual),
        energy_std=float(prof.std()),
        converged=bool(res_a.converged and energy_residual <= 1e-3),
        grad_norm=res_a.grad_norm,
        samples=samples,
    )


def _degenerate_free_time(x, h, m, opts):
    """phi_h(x, x) = 0: constant-path value (U + h) tau with tau at the floor."""
    U = potential(x, m) if m.size >= 2 else 0.0
    tau = 1e-5 / (U + h)
    k = opts.k0
    nodes = np.repeat(x[None], k + 1, axis=0)
    path = DiscretePath(np.linspace(0.0, tau, k + 1), nodes, m)
    return FreeTimeResult(
        path=path,
        tau_star=tau,
        value=(U + h) * tau,
        energy_residual=abs(-U - h),
        converged=True,
        degenerate=True,
        grad_norm=0.0,
        samples=[(tau, (U + h) * tau)],
    )


def _bracket(g_of, lo, hi):
    """Expand [lo, hi] geometrically until g has an interior minimum."""
    for attempt in range(11):
        taus = np.geomspace(lo, hi, 5)
        vals = [g_of(t) for t in taus]
        k = int(np.argmin(vals))
        if 0 < k < len(taus) - 1:
            return taus[k - 1], taus[k + 1]
        if attempt == 10:
            break
        if k == 0:
            lo /= 2.0
        else:
            hi *= 2.0
    raise BracketError(
        "free-time objective has no interior minimum on the scanned range",
        scanned_range=(float(lo), float(hi)),
    )


def _golden(g_of, a, b, rel_tol):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = g_of(c), g_of(d)
    while (b - a) > rel_tol * (0.5 * (a + b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = g_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = g_of(d)
    return 0.5 * (a + b)
