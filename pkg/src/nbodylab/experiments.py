"""End-to-end experiments: hyperbolic ray building, horofunction estimation,
the partially-hyperbolic limit experiment, and the final-configuration
continuity probe.

The limit experiment follows the construction: pick a collision configuration
b with zero center of mass and energy h, approach it through collisionless
directions a_n, build a long free-time minimizer toward a_n * lambda_n for
each n, extract the initial velocities, extrapolate, integrate the resulting
motion, and classify its asymptotics.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .action import DiscretePath, action_supercritical
from .asymptotics import ClassificationReport, classify_motion, fit_final_configuration
from .core import (
    as_configuration,
    as_masses,
    center_of_mass,
    check_collisionless,
    diameter,
    mass_distance,
    mass_inner,
    mass_norm,
    min_mutual_distance,
    potential,
)
from .errors import CollisionError, ConstructionError, ExperimentError
from .flow import State, Trajectory, fitted_initial_velocity, integrate
from .minimizer import FreeTimeResult, MinimizeOptions, minimize_fixed, minimize_free_time


@dataclass
class DirectionSequence:
    b: np.ndarray                 # collision configuration, G(b) = 0, |b|_m^2/2 = h
    masses: np.ndarray
    h: float
    eps_schedule: tuple
    a_list: list                  # collisionless directions a_n -> b
    perturb_dirs: np.ndarray

    def __len__(self):
        return len(self.a_list)


@dataclass
class RayResult:
    free: FreeTimeResult
    v0: np.ndarray                # fitted initial velocity after local polish
    tail_angle: float             # mass-metric angle between path tail and a
    v_energy_residual: float      # | |v0|_m^2/2 - U(x0) - h |
    local_dt: float
    lam: float
    a: np.ndarray


@dataclass
class HorofunctionSample:
    lam: float
    p: np.ndarray
    u_values: dict                # probe index -> phi_h(probe, p); -1 is x_ref
    diffs: dict                   # probe index -> u(probe) - u(ref)
    errors: dict = field(default_factory=dict)


@dataclass
class HorofunctionReport:
    samples: list
    phi_pairs: dict               # (i, j) -> phi_h(probe_i, probe_j)
    domination_residuals: dict    # (i, j) -> max(0, (u(x_i)-u(x_j)) - phi_h) over n
    cauchy: dict                  # probe index -> |diff_{n+1} - diff_n| sequence

    def max_domination_residual(self):
        if not self.domination_residuals:
            return 0.0
        return max(self.domination_residuals.values())

    def cauchy_monotone(self):
        return {
            i: all(b < a for a, b in zip(seq, seq[1:]))
            for i, seq in self.cauchy.items()
        }


@dataclass
class ExperimentReport:
    eps_schedule: tuple
    lambdas: list
    rays: list                    # RayResult or None per n
    failures: dict                # n -> error message
    v_list: list                  # surviving fitted initial velocities
    v_cauchy: list                # mass-metric consecutive differences
    v_sphere_residuals: list
    v_extrapolated: np.ndarray
    trajectory: Trajectory
    classification: ClassificationReport
    checks: dict

    def to_json_dict(self):
        return {
            "eps_schedule": list(self.eps_schedule),
            "lambdas": [float(l) for l in self.lambdas],
            "failures": {str(k): v for k, v in self.failures.items()},
            "v_cauchy": [float(v) for v in self.v_cauchy],
            "v_sphere_residuals": [float(v) for v in self.v_sphere_residuals],
            "v_extrapolated": self.v_extrapolated.tolist(),
            "classification": self.classification.to_json_dict(),
            "checks": self.checks,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)


@dataclass
class ProbeRow:
    param: float
    a: np.ndarray
    fit_residual: float
    error: str = None


@dataclass
class ProbeTable:
    rows: list
    max_adjacent_jump: float      # max |a_{k+1} - a_k|_m over surviving neighbors
    param_step: float

    def to_csv(self, path_or_buf):
        close = False
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            ok_rows = [r for r in self.rows if r.error is None]
            if ok_rows:
                n, d = ok_rows[0].a.shape
                header = ["param"] + [f"a{i}_{c}" for i in range(n) for c in range(d)]
                header += ["fit_residual", "error"]
            else:
                header = ["param", "error"]
            buf.write(",".join(header) + "\n")
            for r in self.rows:
                if r.error is None:
                    vals = [r.param] + list(r.a.reshape(-1)) + [r.fit_residual]
                    buf.write(",".join(format(v, ".17g") for v in vals) + ",\n")
                else:
                    buf.write(format(r.param, ".17g") + "," + r.error + "\n")
        finally:
            if close:
                buf.close()


# ---------------------------------------------------------------------------
# direction sequences


def normalize_direction(b, m, h):
    """Recenter to G = 0 and rescale to |b|_m^2 / 2 = h."""
    b = as_configuration(b)
    m = as_masses(m)
    total = m.sum()
    b = b - center_of_mass(b, m)[None] / total
    norm = mass_norm(b, m)
    if norm <= 0:
        raise ConstructionError("direction vanishes after recentering")
    return b * (np.sqrt(2.0 * h) / norm)


def build_direction_sequence(b, m, h, eps_schedule, perturb_dirs):
    """Collisionless directions a_n = normalize(b + eps_n * perturbation) -> b.

    The perturbation must separate every coincident pair of b; eps_schedule
    must be strictly decreasing and positive.
    """
    m = as_masses(m)
    if h <= 0:
        raise ValueError("h must be strictly positive")
    eps_schedule = tuple(float(e) for e in eps_schedule)
    if not eps_schedule or any(e <= 0 for e in eps_schedule):
        raise ValueError("eps schedule must be positive")
    if any(b <= a for a, b in zip(eps_schedule[1:], eps_schedule)):
        raise ValueError("eps schedule must be strictly decreasing")
    perturb_dirs = as_configuration(perturb_dirs)
    b = normalize_direction(b, m, h)
    if perturb_dirs.shape != b.shape:
        raise ValueError("perturbation directions must match the shape of b")

    a_list = []
    for eps in eps_schedule:
        a = normalize_direction(b + eps * perturb_dirs, m, h)
        if min_mutual_distance(a) <= 0:
            raise ConstructionError(
                f"perturbation with eps={eps} fails to separate all bodies"
            )
        try:
            check_collisionless(a)
        except CollisionError as exc:
            raise ConstructionError(
                f"perturbation with eps={eps} leaves a near-coincident pair"
            ) from exc
        a_list.append(a)
    return DirectionSequence(
        b=b, masses=m, h=float(h), eps_schedule=eps_schedule,
        a_list=a_list, perturb_dirs=perturb_dirs,
    )


# ---------------------------------------------------------------------------
# hyperbolic rays


def _tail_direction(path, frac=0.3):
    """Affine slope of the last fraction of a path's nodes."""
    k = path.k_intervals
    j0 = max(0, int(round((1.0 - frac) * k)))
    t = path.times[j0:]
    flat = path.nodes[j0:].reshape(t.size, -1)
    design = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, flat, rcond=None)
    return coef[0].reshape(path.nodes.shape[1:])


def polish_initial_velocity(path, m, opts, target_dt=2e-3, k_local=512):
    """Cascade of initial-window re-solves until the local grid resolves t = 0.

    Each stage re-minimizes the fixed-endpoint problem on a shrinking initial
    window (endpoint taken from the previous stage), shrinking dt by roughly
    k/(8 k_local) per stage.  Free-time minimizers restrict to fixed-time
    minimizers on subsegments, so the windows inherit the variational problem.
    """
    p = path
    while p.dt > target_dt:
        k = p.k_intervals
        # window of k_local/8 current intervals: dt shrinks 8x per stage
        j = max(4, min(k - 1, k_local // 8))
        if j >= k:
            break
        t_j = float(p.times[j] - p.times[0])
        sub = DiscretePath(p.times[: j + 1].copy(), p.nodes[: j + 1].copy(), m)
        local_opts = MinimizeOptions(
            k0=k_local, refinements=0, grad_tol=opts.grad_tol,
            max_iters=opts.max_iters, barrier_eps=opts.barrier_eps,
            n_starts=1, n_polish=1, seed=opts.seed, memory=opts.memory,
        )
        res = minimize_fixed(
            p.nodes[0], p.nodes[j], t_j, m, local_opts, initial=sub,
            t0=float(p.times[0]),
        )
        if res.path.dt >= p.dt:
            break
        p = res.path
    return fitted_initial_velocity(p), p


def _scaled_opts(opts, x, endpoint, m, h, dt_max):
    """Raise the refinement depth so the global grid spacing stays <= dt_max.

    The duration of a free-time minimizer grows with the endpoint separation,
    so a fixed node count loses resolution on long solves; the value error of
    the discrete action is quadratic in the spacing.
    """
    tau_est = mass_distance(x, endpoint, m) / np.sqrt(2.0 * h)
    need = int(np.ceil(np.log2(max(tau_est / (opts.k0 * dt_max), 1.0))))
    if need <= opts.refinements:
        return opts
    return MinimizeOptions(
        k0=opts.k0, refinements=need, grad_tol=opts.grad_tol,
        max_iters=opts.max_iters, barrier_eps=opts.barrier_eps,
        n_starts=opts.n_starts, n_polish=opts.n_polish,
        seed=opts.seed, memory=opts.memory,
    )


def build_hyperbolic_ray(x0, a, m, h, lam, opts=None, target_dt=2e-3, dt_max=0.5):
    """Finite-lambda surrogate for a free-time minimizer ray toward direction a.

    Minimizes phi_h(x0, a * lam), fits the tail direction against a, and
    extracts the initial velocity from a locally refined start window.  The
    refinement depth is raised as needed to keep the global grid spacing at
    most dt_max, so longer rays do not lose early-time resolution.
    """
    opts = opts or MinimizeOptions()
    m = as_masses(m)
    if m.size < 2:
        raise ValueError("ray construction needs at least two bodies")
    x0 = as_configuration(x0, n_bodies=m.size)
    a = as_configuration(a, n_bodies=m.size, dim=x0.shape[1])
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if abs(0.5 * mass_inner(a, a, m) - h) > 1e-9 * max(1.0, h):
        raise ValueError("direction must satisfy |a|_m^2 / 2 = h")
    check_collisionless(x0)
    check_collisionless(a)

    opts = _scaled_opts(opts, x0, a * lam, m, h, dt_max)
    free = minimize_free_time(x0, a * lam, h, m, opts)
    tail = _tail_direction(free.path)
    cosang = mass_inner(tail, a, m) / max(mass_norm(tail, m) * mass_norm(a, m), 1e-300)
    tail_angle = float(np.arccos(np.clip(cosang, -1.0, 1.0)))

    v0, local = polish_initial_velocity(free.path, m, opts, target_dt=target_dt)
    v_energy = 0.5 * mass_inner(v0, v0, m) - potential(x0, m)
    return RayResult(
        free=free, v0=v0, tail_angle=tail_angle,
        v_energy_residual=abs(v_energy - h),
        local_dt=local.dt, lam=float(lam), a=a,
    )


# ---------------------------------------------------------------------------
# horofunctions


def estimate_horofunction(x_probes, x_ref, seq, lam_schedule, opts=None,
                          dt_max=0.5):
    """Normalized potentials u_{p_n}(x) - u_{p_n}(x_ref) along an escape schedule.

    Endpoints are p_n = a_n * lambda_n (the admissible o(lambda) = 0 surrogate
    that stays collisionless).  Also computes phi_h between all probe pairs
    for the domination (subsolution) residuals.  Each free-time solve keeps
    its global grid spacing at most dt_max regardless of lambda, otherwise the
    discretization bias grows with the schedule and drowns the differences.
    """
    opts = opts or MinimizeOptions()
    m = seq.masses
    h = seq.h
    lam_schedule = [float(l) for l in lam_schedule]
    if len(lam_schedule) != len(seq):
        raise ValueError("lambda schedule must match the direction sequence length")
    if any(l2 <= l1 for l1, l2 in zip(lam_schedule, lam_schedule[1:])):
        raise ValueError("lambda schedule must be increasing")

    probes = [as_configuration(x, n_bodies=m.size) for x in x_probes]
    x_ref = as_configuration(x_ref, n_bodies=m.size)
    for x in probes + [x_ref]:
        check_collisionless(x)

    samples = []
    for n, (a_n, lam) in enumerate(zip(seq.a_list, lam_schedule)):
        p = a_n * lam
        u_values, errors = {}, {}
        try:
            check_collisionless(p)
        except CollisionError as exc:
            samples.append(HorofunctionSample(lam, p, {}, {},
                                              errors={"endpoint": str(exc)}))
            continue
        for idx, x in enumerate(probes + [x_ref]):
            key = idx if idx < len(probes) else -1
            try:
                n_opts = _scaled_opts(opts, x, p, m, h, dt_max)
                u_values[key] = minimize_free_time(x, p, h, m, n_opts).value
            except Exception as exc:  # recorded per probe, experiment continues
                errors[key] = str(exc)
        diffs = {}
        if -1 in u_values:
            for idx in range(len(probes)):
                if idx in u_values:
                    diffs[idx] = u_values[idx] - u_values[-1]
        samples.append(HorofunctionSample(lam, p, u_values, diffs, errors))

    everything = probes + [x_ref]
    keys = list(range(len(probes))) + [-1]
    phi_pairs = {}
    for ii in range(len(everything)):
        for jj in range(ii + 1, len(everything)):
            phi_pairs[(keys[ii], keys[jj])] = minimize_free_time(
                everything[ii], everything[jj], h, m, opts
            ).value

    domination = {}
    for (i, j), phi in phi_pairs.items():
        worst = 0.0
        for s in samples:
            if i in s.u_values and j in s.u_values:
                worst = max(
                    worst,
                    (s.u_values[i] - s.u_values[j]) - phi,
                    (s.u_values[j] - s.u_values[i]) - phi,
                )
        domination[(i, j)] = worst

    cauchy = {}
    for idx in range(len(probes)):
        vals = [s.diffs[idx] for s in samples if idx in s.diffs]
        cauchy[idx] = [abs(b - a) for a, b in zip(vals, vals[1:])]

    return HorofunctionReport(
        samples=samples, phi_pairs=phi_pairs,
        domination_residuals=domination, cauchy=cauchy,
    )


def calibration_residual(free, h, m, opts=None, frac=0.05):
    """Check u_p(start) - u_p(mid) = A_{L+h}(head segment) along a built ray.

    free is a converged free-time result toward endpoint p; the mid point is a
    path node at roughly frac of the duration, and u_p(mid) comes from an
    independent free-time solve from that node to p.
    Returns (relative_residual, head_action).
    """
    opts = opts or MinimizeOptions()
    path = free.path
    j = max(4, int(round(frac * path.k_intervals)))
    if j >= path.k_intervals:
        raise ValueError("frac leaves no tail segment")
    head = DiscretePath(path.times[: j + 1].copy(), path.nodes[: j + 1].copy(), m)
    a_head = action_supercritical(head, h)
    tail_value = minimize_free_time(path.nodes[j], path.nodes[-1], h, m, opts).value
    residual = abs(free.value - tail_value - a_head)
    return residual / max(abs(a_head), 1e-300), a_head


# ---------------------------------------------------------------------------
# the limit experiment


def partially_hyperbolic_experiment(
    x0, seq, lam_rule, horizon, opts=None, extrapolation="last",
    cluster_rel_tol=0.25, rtol=1e-10, target_dt=2e-3, n_samples=800,
):
    """Build rays toward a_n, extrapolate the initial velocities, integrate the
    limit candidate, and classify its long-time behavior.

    lam_rule: callable n -> lambda_n, or a sequence of lambdas.
    x0 is recentered to G = 0 (translation invariance; keeps the center of
    mass of the integrated motion fixed, matching the zero-G endpoints).
    """
    opts = opts or MinimizeOptions()
    m = seq.masses
    h = seq.h
    x0 = as_configuration(x0, n_bodies=m.size)
    if x0.shape[1] < 2:
        raise ValueError("the construction requires dimension >= 2")
    check_collisionless(x0)
    x0 = x0 - center_of_mass(x0, m)[None] / m.sum()

    if len(seq) < 2:
        raise ExperimentError("direction sequence must have at least two terms")

    lambdas = [
        float(lam_rule(n)) if callable(lam_rule) else float(lam_rule[n])
        for n in range(len(seq))
    ]

    rays, failures = [], {}
    for n, (a_n, lam) in enumerate(zip(seq.a_list, lambdas)):
        try:
            rays.append(build_hyperbolic_ray(x0, a_n, m, h, lam, opts,
                                             target_dt=target_dt))
        except Exception as exc:
            rays.append(None)
            failures[n] = str(exc)

    survivors = [r for r in rays if r is not None]
    if len(survivors) < 3:
        raise ExperimentError(
            f"only {len(survivors)} ray builds survived (need at least 3)"
        )

    v_list = [r.v0 for r in survivors]
    v_cauchy = [mass_distance(v_list[i + 1], v_list[i], m)
                for i in range(len(v_list) - 1)]
    v_sphere = [r.v_energy_residual for r in survivors]

    if extrapolation == "richardson" and len(v_list) >= 2:
        eps_ok = [e for e, r in zip(seq.eps_schedule, rays) if r is not None]
        e1, e2 = eps_ok[-2], eps_ok[-1]
        v = v_list[-1] + (v_list[-1] - v_list[-2]) * (e2 / (e1 - e2))
    else:
        v = v_list[-1]

    # the limit velocity lies on the energy-h sphere exactly; rescale the
    # extrapolated speed onto it (the raw residual stays reported above)
    v_kinetic = 0.5 * mass_inner(v, v, m)
    projection = np.sqrt((h + potential(x0, m)) / v_kinetic)
    v = v * projection

    t_eval = np.unique(np.concatenate([
        [0.0], np.geomspace(min(1e-2, horizon * 1e-5), horizon, n_samples)
    ]))
    tr = integrate(State(x0, v, 0.0), m, float(horizon), rtol=rtol,
                   t_eval=t_eval, drift_tol=1e-6)

    g0 = center_of_mass(x0, m)
    g_drift = float(np.max(np.linalg.norm(
        np.einsum("i,tid->td", m, tr.xs) - g0[None], axis=-1)))

    classification = classify_motion(
        tr, fit_window=(horizon / 2.0, float(horizon)),
        exponent_window=(horizon / 10.0, float(horizon)),
        rel_tol=cluster_rel_tol,
    )
    b_prime = classification.asymptotic.a
    checks = {
        "energy_drift": tr.energy_drift(),
        "energy_vs_h": abs(tr.h - h),
        "G_drift": g_drift,
        "G_of_b_prime": float(np.linalg.norm(center_of_mass(b_prime, m))),
        "energy_of_b_prime": classification.asymptotic.energy_of_a,
        "v_projection_factor": float(projection),
        "v_cauchy_decreasing": all(
            b < a for a, b in zip(v_cauchy, v_cauchy[1:])
        ),
    }
    return ExperimentReport(
        eps_schedule=seq.eps_schedule, lambdas=lambdas, rays=rays,
        failures=failures, v_list=v_list, v_cauchy=v_cauchy,
        v_sphere_residuals=v_sphere, v_extrapolated=v,
        trajectory=tr, classification=classification, checks=checks,
    )


# ---------------------------------------------------------------------------
# continuity probe for the final-configuration map


def continuity_probe(x0, m, velocities, params=None, horizon=400.0,
                     fit_window=None, rtol=1e-10):
    """Integrate a one-parameter family of initial velocities and fit the
    limit configuration of each member.  Exploratory output: no pass/fail.
    """
    m = as_masses(m)
    x0 = as_configuration(x0, n_bodies=m.size)
    velocities = np.asarray(velocities, dtype=np.float64)
    if velocities.ndim != 3 or velocities.shape[0] == 0:
        raise ValueError("velocity family must be a nonempty (M, N, d) array")
    if params is None:
        params = np.linspace(0.0, 1.0, velocities.shape[0])
    params = np.asarray(params, dtype=np.float64)
    if fit_window is None:
        fit_window = (horizon / 2.0, float(horizon))

    rows = []
    for p_val, v in zip(params, velocities):
        try:
            tr = integrate(State(x0, v, 0.0), m, float(horizon), rtol=rtol,
                           drift_tol=np.inf,
                           t_eval=np.linspace(0.0, horizon, 400))
            if tr.terminated_by.value != "horizon":
                raise RuntimeError(f"integration stopped: {tr.terminated_by.value}")
            fit = fit_final_configuration(tr, fit_window)
            rows.append(ProbeRow(float(p_val), fit.a, fit.fit_residual))
        except Exception as exc:
            rows.append(ProbeRow(float(p_val), None, np.nan, error=str(exc)))

    jumps = []
    for r1, r2 in zip(rows, rows[1:]):
        if r1.error is None and r2.error is None:
            jumps.append(mass_distance(r1.a, r2.a, m))
    step = float(params[1] - params[0]) if params.size > 1 else np.nan
    return ProbeTable(
        rows=rows,
        max_adjacent_jump=float(max(jumps)) if jumps else np.nan,
        param_step=step,
    )


# ---------------------------------------------------------------------------
# presets


def flagship_preset():
    """The three-body preset: a binary cluster escaping opposite a third body."""
    beta = 1.0 / np.sqrt(6.0)
    return {
        "masses": [1.0, 1.0, 1.0],
        "dim": 2,
        "h": 0.5,
        "x0": [[-0.5, 1.0], [-0.5, -1.0], [1.0, 0.0]],
        "b": [[beta, 0.0], [beta, 0.0], [-2.0 * beta, 0.0]],
        "perturb": [[0.0, 1.0], [0.0, -1.0], [0.0, 0.0]],
        "eps_schedule": [0.2, 0.1, 0.05, 0.025],
        "lambda_c": 100.0,
        "horizon": 1000.0,
        "cluster_rel_tol": 0.25,
        "seed": 0,
    }
