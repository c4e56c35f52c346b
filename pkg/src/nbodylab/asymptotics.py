"""Final-configuration extraction, cluster detection, and motion classification.

The limit configuration of a motion x(t) = a t + o(t) is estimated by affine
least squares over a late time window (the affine intercept absorbs bounded
terms).  Clusters are groups of bodies whose fitted velocities coincide;
cross-cluster distances should grow linearly, intra-cluster distances
sublinearly.  All labels are finite-window statements.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import mass_inner

HYPERBOLIC = "hyperbolic"
PARTIALLY_HYPERBOLIC = "partially_hyperbolic"
UNRESOLVED = "unresolved"

# A cluster split is only trusted when the spread of the fitted limit
# configuration exceeds this multiple of the per-unit-time fit residual.
SIGNIFICANCE_FACTOR = 10.0


@dataclass
class AsymptoticConfiguration:
    a: np.ndarray               # (N, d) fitted limit of x(t)/t
    intercept: np.ndarray       # (N, d) affine offset
    fit_window: tuple
    fit_residual: float         # rms mass-metric residual per unit t
    energy_of_a: float          # |a|_m^2 / 2


@dataclass
class ClusterPartition:
    blocks: tuple               # tuple of sorted index tuples covering {0..N-1}
    separation_margin: float    # min inter-block over max intra-block distance


@dataclass
class ClassificationReport:
    label: str
    asymptotic: AsymptoticConfiguration
    partition: ClusterPartition
    cross_exponents: dict       # (i, j) -> log-log slope, i and j in different blocks
    intra_exponents: dict       # (i, j) -> slope within a block
    fit_window: tuple
    exponent_window: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "label": self.label,
            "a": self.asymptotic.a.tolist(),
            "blocks": [list(b) for b in self.partition.blocks],
            "margins": self.partition.separation_margin,
            "exponents": {
                "cross": {f"{i}-{j}": v for (i, j), v in self.cross_exponents.items()},
                "intra": {f"{i}-{j}": v for (i, j), v in self.intra_exponents.items()},
            },
            "windows": {"fit": list(self.fit_window),
                        "exponent": list(self.exponent_window)},
            "residuals": {"fit": self.asymptotic.fit_residual},
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)


def _window_mask(times, window):
    t_a, t_b = window
    if t_a <= 0:
        raise ValueError("fit windows must start at a strictly positive time")
    if t_a >= t_b:
        raise ValueError("fit window must have positive length")
    if t_a < times[0] - 1e-12 or t_b > times[-1] + 1e-12:
        raise ValueError("window lies outside the trajectory")
    mask = (times >= t_a) & (times <= t_b)
    if mask.sum() < 3:
        raise ValueError("window contains fewer than 3 samples")
    return mask


def fit_final_configuration(tr, window):
    """Affine least-squares fit x(t) ~ a t + c over the window."""
    mask = _window_mask(tr.times, window)
    t = tr.times[mask]
    design = np.column_stack([t, np.ones_like(t)])
    flat = tr.xs[mask].reshape(t.size, -1)
    coef, *_ = np.linalg.lstsq(design, flat, rcond=None)
    a = coef[0].reshape(tr.n_bodies, tr.dim)
    c = coef[1].reshape(tr.n_bodies, tr.dim)
    resid = flat - design @ coef
    resid_cfg = resid.reshape(t.size, tr.n_bodies, tr.dim)
    rms = np.sqrt(
        np.mean([mass_inner(r, r, tr.masses) for r in resid_cfg])
    )
    span = float(window[1] - window[0])
    return AsymptoticConfiguration(
        a=a,
        intercept=c,
        fit_window=(float(window[0]), float(window[1])),
        fit_residual=float(rms / span),
        energy_of_a=0.5 * mass_inner(a, a, tr.masses),
    )


def detect_clusters(a, rel_tol=1e-2):
    """Single-linkage grouping of the rows of a with threshold rel_tol * diam.

    Bodies whose components are within the threshold (transitively) share a
    block.  A zero-diameter configuration collapses to a single block with
    margin 0.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n == 1:
        return ClusterPartition(blocks=((0,),), separation_margin=np.inf)
    iu, ju = np.triu_indices(n, k=1)
    dist = np.linalg.norm(a[iu] - a[ju], axis=-1)
    diam = float(dist.max())
    if diam == 0.0:
        return ClusterPartition(blocks=(tuple(range(n)),), separation_margin=0.0)
    threshold = rel_tol * diam

    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for (i, j, d) in zip(iu, ju, dist):
        if d <= threshold:
            parent[find(int(i))] = find(int(j))

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    blocks = tuple(tuple(sorted(g)) for g in sorted(groups.values(), key=lambda g: g[0]))

    block_of = {}
    for bi, block in enumerate(blocks):
        for i in block:
            block_of[i] = bi
    inter = [d for i, j, d in zip(iu, ju, dist) if block_of[int(i)] != block_of[int(j)]]
    intra = [d for i, j, d in zip(iu, ju, dist) if block_of[int(i)] == block_of[int(j)]]
    if not inter:
        margin = 0.0
    elif not intra or max(intra) == 0.0:
        margin = np.inf
    else:
        margin = float(min(inter) / max(intra))
    return ClusterPartition(blocks=blocks, separation_margin=margin)


def growth_exponent(tr, pair, window):
    """Log-log slope of the mutual distance of a body pair over the window."""
    i, j = pair
    mask = _window_mask(tr.times, window)
    t = tr.times[mask]
    r = np.linalg.norm(tr.xs[mask, i] - tr.xs[mask, j], axis=-1)
    if np.any(r <= 0):
        raise ValueError("pair distance vanishes inside the window")
    slope, _ = np.polyfit(np.log(t), np.log(r), 1)
    return float(slope)


def classify_motion(tr, fit_window=None, exponent_window=None, rel_tol=1e-2,
                    margin_confident=2.0, linear_tol=0.05):
    """Finite-window classification into hyperbolic / partially hyperbolic.

    hyperbolic: all fitted-velocity blocks are singletons with margin above
    margin_confident.  partially_hyperbolic: at least two blocks, one of size
    >= 2, and every cross-cluster distance exponent within linear_tol of 1.
    Everything else (including any failed sub-fit) is unresolved.
    """
    t_end = float(tr.times[-1])
    if fit_window is None:
        fit_window = (t_end / 2.0, t_end)
    if exponent_window is None:
        exponent_window = (t_end / 10.0, t_end)

    diagnostics = {}
    try:
        asym = fit_final_configuration(tr, fit_window)
    except ValueError as exc:
        raise ValueError(f"classification window invalid: {exc}") from exc

    a = asym.a
    diam = 0.0
    if tr.n_bodies >= 2:
        iu, ju = np.triu_indices(tr.n_bodies, k=1)
        diam = float(np.max(np.linalg.norm(a[iu] - a[ju], axis=-1)))
    significant = diam > SIGNIFICANCE_FACTOR * asym.fit_residual
    diagnostics["a_diameter"] = diam
    diagnostics["significant_separation"] = bool(significant)

    if not significant:
        partition = ClusterPartition(
            blocks=(tuple(range(tr.n_bodies)),), separation_margin=0.0
        )
        return ClassificationReport(
            label=UNRESOLVED, asymptotic=asym, partition=partition,
            cross_exponents={}, intra_exponents={},
            fit_window=fit_window, exponent_window=exponent_window,
            diagnostics=diagnostics,
        )

    partition = detect_clusters(a, rel_tol=rel_tol)
    block_of = {}
    for bi, block in enumerate(partition.blocks):
        for i in block:
            block_of[i] = bi

    cross, intra = {}, {}
    failed = False
    for i in range(tr.n_bodies):
        for j in range(i + 1, tr.n_bodies):
            try:
                slope = growth_exponent(tr, (i, j), exponent_window)
            except ValueError:
                failed = True
                continue
            if block_of[i] == block_of[j]:
                intra[(i, j)] = slope
            else:
                cross[(i, j)] = slope

    label = UNRESOLVED
    if not failed:
        all_singletons = all(len(b) == 1 for b in partition.blocks)
        if all_singletons and partition.separation_margin > margin_confident:
            label = HYPERBOLIC
        elif (
            len(partition.blocks) >= 2
            and any(len(b) >= 2 for b in partition.blocks)
            and cross
            and all(abs(s - 1.0) <= linear_tol for s in cross.values())
        ):
            label = PARTIALLY_HYPERBOLIC

    return ClassificationReport(
        label=label, asymptotic=asym, partition=partition,
        cross_exponents=cross, intra_exponents=intra,
        fit_window=fit_window, exponent_window=exponent_window,
        diagnostics=diagnostics,
    )
