"""Command-line interface.

Subcommands: minimize, flow, ray, horofn, phmotion, probe-c.  Configuration
is a TOML file (see README for the schema); selected values can be overridden
by flags.  Exit codes: 0 success, 2 invalid config, 3 solver non-convergence,
4 experiment error.
"""

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .asymptotics import PARTIALLY_HYPERBOLIC
from .errors import BracketError, CollisionError, ConstructionError, ExperimentError
from .experiments import (
    build_direction_sequence,
    build_hyperbolic_ray,
    continuity_probe,
    estimate_horofunction,
    flagship_preset,
    partially_hyperbolic_experiment,
)
from .flow import State, integrate
from .minimizer import MinimizeOptions, minimize_fixed, minimize_free_time

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_EXPERIMENT = 4


class ConfigError(Exception):
    pass


def _load_config(path):
    if path is None:
        raise ConfigError("a --config file is required")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def _require(cfg, section, key=None):
    if section not in cfg:
        raise ConfigError(f"missing [{section}] section")
    if key is None:
        return cfg[section]
    if key not in cfg[section]:
        raise ConfigError(f"missing key '{key}' in [{section}]")
    return cfg[section][key]


def _array(value, name):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{name}' is not a numeric array") from exc
    return arr


def _options(cfg, args):
    sol = dict(cfg.get("solver", {}))
    for key in ("k0", "refinements", "seed"):
        override = getattr(args, key.replace("-", "_"), None)
        if override is not None:
            sol[key] = override
    allowed = {
        "k0", "refinements", "grad_tol", "max_iters", "barrier_eps",
        "n_starts", "n_polish", "seed", "memory",
    }
    unknown = set(sol) - allowed
    if unknown:
        raise ConfigError(f"unknown [solver] keys: {sorted(unknown)}")
    try:
        return MinimizeOptions(**sol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from exc


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_path_csv(path, fname):
    n, d = path.n_bodies, path.dim
    cols = ["t"] + [f"x{i}_{c}" for i in range(n) for c in range(d)]
    with open(fname, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t, node in zip(path.times, path.nodes):
            vals = [t] + list(node.reshape(-1))
            fh.write(",".join(format(v, ".17g") for v in vals) + "\n")


def _system(cfg):
    masses = _array(_require(cfg, "system", "masses"), "system.masses")
    dim = int(_require(cfg, "system", "dim"))
    return masses, dim


def cmd_minimize(args):
    cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    opts = _options(cfg, args)
    x = _array(_require(cfg, "minimize", "x"), "minimize.x")
    y = _array(_require(cfg, "minimize", "y"), "minimize.y")
    tau = args.tau if args.tau is not None else cfg["minimize"].get("tau")
    h = args.h if args.h is not None else cfg["minimize"].get("h")
    out = _out_dir(args)
    if tau is not None:
        res = minimize_fixed(x, y, float(tau), masses, opts)
    elif h is not None:
        res = minimize_free_time(x, y, float(h), masses, opts)
    else:
        raise ConfigError("either 'tau' (fixed-time) or 'h' (free-time) is required")
    (out / "result.json").write_text(json.dumps(res.to_json_dict(), indent=2))
    _write_path_csv(res.path, out / "path.csv")
    print(f"value={res.value:.12g} converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def cmd_flow(args):
    cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    x0 = _array(_require(cfg, "flow", "x0"), "flow.x0")
    v0 = _array(_require(cfg, "flow", "v0"), "flow.v0")
    t_end = args.t_end if args.t_end is not None else _require(cfg, "flow", "t_end")
    rtol = args.rtol if args.rtol is not None else cfg["flow"].get("rtol", 1e-10)
    n_out = int(cfg["flow"].get("samples", 500))
    out = _out_dir(args)
    tr = integrate(State(x0, v0, 0.0), masses, float(t_end), rtol=float(rtol),
                   t_eval=np.linspace(0.0, float(t_end), n_out))
    tr.to_csv(out / "trajectory.csv")
    (out / "trajectory.json").write_text(tr.to_json(indent=2))
    print(f"terminated_by={tr.terminated_by.value} energy_drift={tr.energy_drift():.3e}")
    return EXIT_OK


def cmd_ray(args):
    cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    opts = _options(cfg, args)
    x0 = _array(_require(cfg, "ray", "x0"), "ray.x0")
    a = _array(_require(cfg, "ray", "a"), "ray.a")
    h = float(_require(cfg, "ray", "h"))
    lam = args.lam if args.lam is not None else _require(cfg, "ray", "lambda")
    out = _out_dir(args)
    ray = build_hyperbolic_ray(x0, a, masses, h, float(lam), opts)
    report = {
        "lambda": ray.lam,
        "value": ray.free.value,
        "tau_star": ray.free.tau_star,
        "converged": ray.free.converged,
        "tail_angle_rad": ray.tail_angle,
        "v0": ray.v0.tolist(),
        "v_energy_residual": ray.v_energy_residual,
        "local_dt": ray.local_dt,
    }
    (out / "ray.json").write_text(json.dumps(report, indent=2))
    _write_path_csv(ray.free.path, out / "ray_path.csv")
    print(f"tau_star={ray.free.tau_star:.6g} tail_angle={ray.tail_angle:.4f} rad")
    return EXIT_OK if ray.free.converged else EXIT_NO_CONVERGENCE


def _direction_sequence(cfg, masses):
    sec = _require(cfg, "direction")
    return build_direction_sequence(
        _array(_require(cfg, "direction", "b"), "direction.b"),
        masses,
        float(_require(cfg, "direction", "h")),
        sec.get("eps", sec.get("eps_schedule")) or _missing("direction.eps"),
        _array(_require(cfg, "direction", "perturb"), "direction.perturb"),
    )


def _missing(name):
    raise ConfigError(f"missing key '{name}'")


def cmd_horofn(args):
    cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    opts = _options(cfg, args)
    seq = _direction_sequence(cfg, masses)
    probes = [_array(p, "horofn.probes") for p in _require(cfg, "horofn", "probes")]
    x_ref = _array(_require(cfg, "horofn", "x_ref"), "horofn.x_ref")
    lambdas = _require(cfg, "horofn", "lambdas")
    out = _out_dir(args)
    report = estimate_horofunction(probes, x_ref, seq, lambdas, opts)
    for n, s in enumerate(report.samples):
        record = {
            "lambda": s.lam,
            "p": s.p.tolist(),
            "u_values": {str(k): v for k, v in s.u_values.items()},
            "diffs": {str(k): v for k, v in s.diffs.items()},
            "errors": s.errors,
        }
        (out / f"horofn_{n}.json").write_text(json.dumps(record, indent=2))
    summary = {
        "max_domination_residual": report.max_domination_residual(),
        "cauchy": {str(k): v for k, v in report.cauchy.items()},
        "cauchy_monotone": {str(k): v for k, v in report.cauchy_monotone().items()},
    }
    (out / "horofn_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"max_domination_residual={report.max_domination_residual():.3e}")
    return EXIT_OK


def cmd_phmotion(args):
    if args.preset == "flagship":
        preset = flagship_preset()
        cfg = {
            "system": {"masses": preset["masses"], "dim": preset["dim"]},
            "direction": {"b": preset["b"], "perturb": preset["perturb"],
                          "eps": preset["eps_schedule"], "h": preset["h"]},
            "experiment": {"x0": preset["x0"], "lambda_c": preset["lambda_c"],
                           "horizon": preset["horizon"],
                           "cluster_rel_tol": preset["cluster_rel_tol"]},
            "solver": {"k0": 64, "refinements": 4, "seed": preset["seed"]},
        }
    else:
        cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    opts = _options(cfg, args)
    seq = _direction_sequence(cfg, masses)
    exp = _require(cfg, "experiment")
    x0 = _array(_require(cfg, "experiment", "x0"), "experiment.x0")
    lam_c = float(exp.get("lambda_c", 100.0))
    horizon = float(exp.get("horizon", 1000.0))
    out = _out_dir(args)
    report = partially_hyperbolic_experiment(
        x0, seq, lambda n: lam_c / seq.eps_schedule[n], horizon, opts,
        extrapolation=exp.get("extrapolation", "last"),
        cluster_rel_tol=float(exp.get("cluster_rel_tol", 0.25)),
    )
    (out / "report.json").write_text(report.to_json(indent=2))
    report.trajectory.to_csv(out / "trajectory.csv")
    _write_plot_data(report, out)
    label = report.classification.label
    print(f"label={label} blocks={report.classification.partition.blocks}")
    return EXIT_OK


def _write_plot_data(report, out):
    tr = report.trajectory
    mask = tr.times > 0
    for i in range(tr.n_bodies):
        for j in range(i + 1, tr.n_bodies):
            r = tr.pair_distance(i, j)
            with open(out / f"r_{i}{j}.dat", "w") as fh:
                for t, v in zip(tr.times, r):
                    fh.write(f"{t:.17g} {v:.17g}\n")
            with open(out / f"loglog_r_{i}{j}.dat", "w") as fh:
                for t, v in zip(tr.times[mask], r[mask]):
                    if v > 0:
                        fh.write(f"{np.log(t):.17g} {np.log(v):.17g}\n")
    with open(out / "param_vs_a.dat", "w") as fh:
        for eps, ray in zip(report.eps_schedule, report.rays):
            if ray is None:
                continue
            comps = " ".join(format(v, ".17g") for v in ray.a.reshape(-1))
            fh.write(f"{eps:.17g} {comps}\n")


def cmd_probe_c(args):
    cfg = _load_config(args.config)
    masses, _ = _system(cfg)
    probe = _require(cfg, "probe")
    x0 = _array(_require(cfg, "probe", "x0"), "probe.x0")
    v_start = _array(_require(cfg, "probe", "v_start"), "probe.v_start")
    v_end = _array(_require(cfg, "probe", "v_end"), "probe.v_end")
    n = int(probe.get("samples", 11))
    horizon = float(probe.get("horizon", 400.0))
    window = probe.get("window")
    if n < 1:
        raise ConfigError("probe.samples must be at least 1")
    s = np.linspace(0.0, 1.0, n)
    velocities = v_start[None] * (1.0 - s)[:, None, None] + v_end[None] * s[:, None, None]
    out = _out_dir(args)
    table = continuity_probe(
        x0, masses, velocities, params=s, horizon=horizon,
        fit_window=tuple(window) if window else None,
        rtol=float(probe.get("rtol", 1e-10)),
    )
    table.to_csv(out / "probe.csv")
    print(f"max_adjacent_jump={table.max_adjacent_jump:.6g} step={table.param_step:.6g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nbodylab")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **extra):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=".")
        p.add_argument("--k0", type=int, default=None)
        p.add_argument("--refinements", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(fn=fn)
        return p

    p = add("minimize", cmd_minimize)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)

    p = add("flow", cmd_flow)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--rtol", type=float, default=None)

    p = add("ray", cmd_ray)
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    add("horofn", cmd_horofn)

    p = add("phmotion", cmd_phmotion)
    p.add_argument("--preset", choices=["flagship"], default=None)

    add("probe-c", cmd_probe_c)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ConstructionError, CollisionError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
