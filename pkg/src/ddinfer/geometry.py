"""Phase-space geometry: weighted metrics, orthonormal bases, affine subspaces.

Phase space is R^{2N} with N = m * d for m members carrying d strain and d
stress components each.  A point z = (strain, stress) is stored as a flat
vector of length 2N, strain block first.  The energy metric is diagonal:
member e contributes w_e * C_e on its strain block and w_e / C_e on its
stress block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Metric",
    "PhaseVector",
    "AffineSubspace",
    "weighted_norm",
    "project_affine",
    "nullspace_basis",
    "metric_orthonormalize",
]

# Relative cutoff below which a singular value or a residual counts as zero.
RANK_TOL = 1e-10


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first nonzero entry is positive.

    Makes basis choices deterministic across platforms.  An entry counts as
    nonzero when it exceeds 1e-12 times the column's largest magnitude.
    """
    out = np.array(vectors, dtype=float)
    for j in range(out.shape[1]):
        col = out[:, j]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        nonzero = np.nonzero(np.abs(col) > 1e-12 * scale)[0]
        if nonzero.size and col[nonzero[0]] < 0.0:
            out[:, j] = -col
    return out


@dataclass(frozen=True)
class Metric:
    """Diagonal energy metric on phase space R^{2N}.

    Parameters
    ----------
    member_weights : (m,) array
        Positive weights w_e (cell volumes or bar measures).
    member_moduli : (m,) array
        Positive reference moduli C_e.
    block_dim : int
        Components per member block (1 for trusses).
    """

    member_weights: np.ndarray
    member_moduli: np.ndarray
    block_dim: int = 1
    diag: np.ndarray = field(init=False, repr=False, compare=False)
    sqrt_diag: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.member_weights, dtype=float))
        c = np.atleast_1d(np.asarray(self.member_moduli, dtype=float))
        if w.shape != c.shape or w.ndim != 1:
            raise ValueError("member_weights and member_moduli must be 1-d of equal length")
        if not (np.all(w > 0.0) and np.all(np.isfinite(w))):
            raise ValueError("member weights must be positive and finite")
        if not (np.all(c > 0.0) and np.all(np.isfinite(c))):
            raise ValueError("member moduli must be positive and finite")
        if self.block_dim < 1:
            raise ValueError("block_dim must be >= 1")
        object.__setattr__(self, "member_weights", w)
        object.__setattr__(self, "member_moduli", c)
        d = self.block_dim
        diag = np.concatenate([np.repeat(w * c, d), np.repeat(w / c, d)])
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "sqrt_diag", np.sqrt(diag))

    @classmethod
    def euclidean(cls, dim: int) -> "Metric":
        """Euclidean metric on R^{dim} (dim = 2N even)."""
        if dim % 2 != 0 or dim < 2:
            raise ValueError("phase-space dimension must be a positive even number")
        half = dim // 2
        return cls(np.ones(half), np.ones(half), block_dim=1)

    @property
    def n_members(self) -> int:
        return self.member_weights.size

    @property
    def half_dim(self) -> int:
        """N = m * d, the number of strain (equivalently stress) components."""
        return self.n_members * self.block_dim

    @property
    def dim(self) -> int:
        """Full phase-space dimension 2N."""
        return 2 * self.half_dim

    @property
    def log_det(self) -> float:
        return float(np.sum(np.log(self.diag)))

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        x = as_phase_array(x)
        y = as_phase_array(y)
        return float(np.dot(x, self.diag * y))

    def norm(self, z) -> float:
        z = as_phase_array(z)
        return float(np.sqrt(np.dot(z, self.diag * z)))

    def norm_many(self, rows: np.ndarray) -> np.ndarray:
        """Row-wise metric norms of an (k, 2N) array."""
        rows = np.asarray(rows, dtype=float)
        return np.sqrt((rows * rows * self.diag).sum(axis=1))

    def sq_norm_many(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        return (rows * rows * self.diag).sum(axis=1)


@dataclass(frozen=True)
class PhaseVector:
    """A point z = (strain, stress) of phase space, stored flat (2N,)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size == 0 or v.size % 2 != 0:
            raise ValueError("phase vector length must be a positive even number")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_parts(cls, strain: np.ndarray, stress: np.ndarray) -> "PhaseVector":
        strain = np.asarray(strain, dtype=float).reshape(-1)
        stress = np.asarray(stress, dtype=float).reshape(-1)
        if strain.size != stress.size:
            raise ValueError("strain and stress blocks must have equal length")
        return cls(np.concatenate([strain, stress]))

    @property
    def half_dim(self) -> int:
        return self.values.size // 2

    @property
    def strain(self) -> np.ndarray:
        return self.values[: self.half_dim]

    @property
    def stress(self) -> np.ndarray:
        return self.values[self.half_dim :]

    def __add__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector(self.values + as_phase_array(other))

    def __sub__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector(self.values - as_phase_array(other))

    def __mul__(self, scalar: float) -> "PhaseVector":
        return PhaseVector(self.values * float(scalar))

    __rmul__ = __mul__


def as_phase_array(z) -> np.ndarray:
    """Coerce a PhaseVector or array-like to a flat float array."""
    if isinstance(z, PhaseVector):
        return z.values
    return np.asarray(z, dtype=float).reshape(-1)


def weighted_norm(z, metric: Metric) -> float:
    """Energy norm ||z|| = sqrt(sum_e w_e (C_e |strain_e|^2 + |stress_e|^2 / C_e))."""
    v = as_phase_array(z)
    if v.size != metric.dim:
        raise ValueError(f"phase vector has length {v.size}, metric expects {metric.dim}")
    return metric.norm(v)


def nullspace_basis(matrix: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of Ker(matrix) via SVD.

    Singular values at or below ``tol`` times the largest one are treated as
    zero.  Returns a (q, k) array of orthonormal columns (Euclidean inner
    product), deterministic sign: first nonzero entry of each column positive.
    A zero matrix yields the full identity-sized basis.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    q = m.shape[1]
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    s_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * s_max)) if s_max > 0.0 else 0
    return _fix_sign(vh[rank:].T.copy())


def metric_orthonormalize(vectors: np.ndarray, metric: Metric) -> np.ndarray:
    """Gram-Schmidt in the metric inner product.

    Parameters
    ----------
    vectors : (2N, k) array
        Independent columns to orthonormalize.

    Returns
    -------
    (2N, k) array with metric-orthonormal columns spanning the same space.
    Dependent input raises ValueError.
    """
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2 or v.shape[0] != metric.dim:
        raise ValueError(f"expected columns of length {metric.dim}")
    out = np.zeros_like(v)
    gdiag = metric.diag
    for j in range(v.shape[1]):
        w = v[:, j].copy()
        original = metric.norm(w)
        # Two orthogonalization passes keep loss of orthogonality at round-off.
        for _ in range(2):
            if j:
                coeffs = out[:, :j].T @ (gdiag * w)
                w -= out[:, :j] @ coeffs
        norm = metric.norm(w)
        if original == 0.0 or norm <= RANK_TOL * original:
            raise ValueError(f"input column {j} is dependent on the preceding ones")
        out[:, j] = w / norm
    return _fix_sign(out)


@dataclass(frozen=True)
class AffineSubspace:
    """Affine subspace origin + span(basis) of phase space.

    ``basis`` columns are metric-orthonormal; ``complement`` columns are a
    metric-orthonormal basis of the orthogonal complement, so projections and
    transverse coordinates are plain inner products.
    """

    origin: np.ndarray
    basis: np.ndarray
    complement: np.ndarray
    metric: Metric

    @classmethod
    def from_span(cls, origin, span_vectors: np.ndarray, metric: Metric) -> "AffineSubspace":
        """Build from independent spanning columns (metric-orthonormalized here)."""
        origin = as_phase_array(origin)
        if origin.size != metric.dim:
            raise ValueError("origin length does not match the metric dimension")
        basis = metric_orthonormalize(span_vectors, metric)
        # Map to Euclidean coordinates, complete with the SVD left factor, map
        # back: columns k.. of U span the Euclidean orthocomplement of G^{1/2}B.
        w = metric.sqrt_diag[:, None] * basis
        u, _, _ = np.linalg.svd(w, full_matrices=True)
        k = basis.shape[1]
        complement = _fix_sign(u[:, k:] / metric.sqrt_diag[:, None])
        return cls(origin=origin, basis=basis, complement=complement, metric=metric)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def codim(self) -> int:
        return self.complement.shape[1]

    def coords(self, y) -> np.ndarray:
        """Metric coordinates of y - origin along the basis."""
        delta = as_phase_array(y) - self.origin
        return self.basis.T @ (self.metric.diag * delta)

    def transverse_coords(self, y) -> np.ndarray:
        delta = as_phase_array(y) - self.origin
        return self.complement.T @ (self.metric.diag * delta)

    def point_at(self, coords: np.ndarray) -> np.ndarray:
        return self.origin + self.basis @ np.asarray(coords, dtype=float)

    def project(self, y) -> np.ndarray:
        return self.point_at(self.coords(y))

    def project_many(self, rows: np.ndarray) -> np.ndarray:
        """Project each row of an (k, 2N) array onto the subspace."""
        rows = np.asarray(rows, dtype=float)
        coords = (rows - self.origin) @ (self.metric.diag[:, None] * self.basis)
        return self.origin + coords @ self.basis.T

    def distance(self, y) -> float:
        yv = as_phase_array(y)
        return self.metric.norm(yv - self.project(yv))

    def distance_many(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        return self.metric.norm_many(rows - self.project_many(rows))


def project_affine(y, subspace: AffineSubspace) -> PhaseVector:
    """Closest point of the affine subspace in the metric norm."""
    return PhaseVector(subspace.project(y))
