"""Pure-numpy fallback for the pairwise gravity kernels.

Same contracts as the compiled extension in ``_core.pyx``: inputs are
C-contiguous float64 arrays, masses are strictly positive, and no collision
checking happens here (callers guard using the returned minimum distances).
"""

import numpy as np

BACKEND = "pure"


def min_pair_distance(x):
    """Smallest mutual distance of one configuration.

    Returns (dmin, i, j); (inf, -1, -1) for fewer than two bodies.
    """
    n = x.shape[0]
    if n < 2:
        return np.inf, -1, -1
    iu, ju = np.triu_indices(n, k=1)
    d = np.linalg.norm(x[iu] - x[ju], axis=-1)
    k = int(np.argmin(d))
    return float(d[k]), int(iu[k]), int(ju[k])


def path_potentials(xs, m):
    """Newtonian potential and min mutual distance at each of K configurations.

    xs: (K, N, d); m: (N,). Returns (U (K,), dmin (K,)). Coincident pairs
    produce inf in U and 0 in dmin rather than an error.
    """
    K, n, _ = xs.shape
    if n < 2:
        return np.zeros(K), np.full(K, np.inf)
    iu, ju = np.triu_indices(n, k=1)
    diff = xs[:, iu, :] - xs[:, ju, :]
    r = np.sqrt(np.einsum("kpd,kpd->kp", diff, diff))
    mm = m[iu] * m[ju]
    with np.errstate(divide="ignore"):
        U = (mm / r).sum(axis=1)
    return U, r.min(axis=1)


def path_potential_gradients(xs, m):
    """Potentials plus mass-metric potential gradients at K configurations.

    Gradient row i is sum_{j != i} m_j (x_j - x_i) / |x_j - x_i|^3, i.e. the
    gradient of U with respect to the mass inner product.
    Returns (U (K,), grad (K, N, d), dmin (K,)).
    """
    K, n, d = xs.shape
    if n < 2:
        return np.zeros(K), np.zeros_like(xs), np.full(K, np.inf)
    diff = xs[:, None, :, :] - xs[:, :, None, :]  # [k, i, j] = x_j - x_i
    r2 = np.einsum("kijd,kijd->kij", diff, diff)
    idx = np.arange(n)
    r2[:, idx, idx] = np.inf
    r = np.sqrt(r2)
    with np.errstate(divide="ignore"):
        inv_r = 1.0 / r
    mm = m[None, :] * m[:, None]
    U = 0.5 * np.einsum("ij,kij->k", mm, inv_r)
    grad = np.einsum("j,kij,kijd->kid", m, inv_r**3, diff)
    dmin = r.reshape(K, -1).min(axis=1)
    return U, grad, dmin
