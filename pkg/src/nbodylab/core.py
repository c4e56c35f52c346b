"""Mass-metric geometry of configuration space and the Newtonian potential.

Configurations are (N, d) float arrays, masses are (N,) positive floats, and
the gravitational constant is 1.  All gradients are taken with respect to the
mass inner product <x, y> = sum_i m_i <x_i, y_i>, so Newton's equations read
xdd = grad U(x).
"""

import numpy as np

from . import kernels
from .errors import CollisionError

# Pairs closer than this fraction of the configuration diameter count as
# collided (double-precision safety margin before 1/r overflows usefulness).
COLLISION_REL_TOL = 1e-12


def as_masses(m):
    """Validate and return masses as a float64 array (all positive, N >= 1)."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 1 or m.size < 1:
        raise ValueError("masses must be a 1-D sequence with at least one entry")
    if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
        raise ValueError("masses must be finite and strictly positive")
    return m


def as_configuration(x, n_bodies=None, dim=None):
    """Validate and return a configuration as an (N, d) float64 array."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("configuration must be an (N, d) matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("configuration entries must be finite")
    if n_bodies is not None and x.shape[0] != n_bodies:
        raise ValueError(f"expected {n_bodies} bodies, got {x.shape[0]}")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {x.shape[1]}")
    return x


def mass_inner(x, y, m):
    """Mass inner product sum_i m_i <x_i, y_i> of two (N, d) matrices."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[0] != m.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, y {y.shape}, m {m.shape}")
    return float(np.einsum("i,id,id->", m, x, y))


def mass_norm(x, m):
    """Norm induced by the mass inner product."""
    return float(np.sqrt(mass_inner(x, x, m)))


def mass_distance(x, y, m):
    return mass_norm(np.asarray(x) - np.asarray(y), m)


def diameter(x):
    """Largest mutual distance of a configuration (0 for a single body)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    return float(np.max(np.linalg.norm(x[iu] - x[ju], axis=-1)))


def min_mutual_distance(x):
    """Smallest mutual distance; membership test for the collisionless set."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    d, _, _ = kernels.min_pair_distance(x)
    return float(d)


def closest_pair(x):
    """(dmin, i, j) with i < j the closest pair; (inf, -1, -1) for N = 1."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    d, i, j = kernels.min_pair_distance(x)
    return float(d), int(i), int(j)


def check_collisionless(x):
    """Raise CollisionError unless x is safely collisionless."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        return x
    d, i, j = kernels.min_pair_distance(x)
    if d <= COLLISION_REL_TOL * diameter(x):
        raise CollisionError(f"bodies {i} and {j} are collided (distance {d})", pair=(i, j))
    return x


def potential(x, m):
    """Newtonian potential U(x) = sum_{i<j} m_i m_j / |x_i - x_j| (G = 1)."""
    x = as_configuration(x)
    m = as_masses(m)
    if x.shape[0] != m.shape[0]:
        raise ValueError("configuration and masses disagree on N")
    check_collisionless(x)
    U, _ = kernels.path_potentials(x[None], m)
    return float(U[0])


def potential_gradient(x, m):
    """Mass-metric gradient of U; row i is sum_{j!=i} m_j (x_j - x_i)/r_ij^3."""
    x = as_configuration(x)
    m = as_masses(m)
    if x.shape[0] != m.shape[0]:
        raise ValueError("configuration and masses disagree on N")
    check_collisionless(x)
    _, grad, _ = kernels.path_potential_gradients(x[None], m)
    return grad[0]


def center_of_mass(x, m):
    """Unnormalized center-of-mass map G(x) = sum_i m_i x_i (a point in E)."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return m @ x


def barycenter(x, m):
    """Normalized barycenter G(x) / sum(m), for human-readable reports."""
    m = np.asarray(m, dtype=np.float64)
    return center_of_mass(x, m) / m.sum()


def lagrangian(x, v, m):
    """Newtonian Lagrangian |v|_m^2 / 2 + U(x)."""
    v = np.asarray(v, dtype=np.float64)
    x = as_configuration(x)
    if v.shape != x.shape:
        raise ValueError("velocity shape must match configuration shape")
    return 0.5 * mass_inner(v, v, m) + potential(x, m)
