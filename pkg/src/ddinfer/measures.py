"""Likelihood measures, thermal weights, and divergences, all in log domain.

Thermalization multiplies a measure on material/admissible pairs (y, z) by
the normalized Gaussian concentration weight exp(-beta ||y - z||^2) / B_beta,
with B_beta the full-space Gaussian mass.  Weights are kept as logs
throughout; a separate scalar log_scale carries overall normalization
constants so that rescaling all weights never touches the per-atom array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .geometry import AffineSubspace, Metric

__all__ = [
    "ThermalizationParams",
    "EmpiricalMeasure",
    "DegenerateThermalizationError",
    "LikelihoodModel",
    "GaussianGraphLikelihood",
    "SlidingGaussianLikelihood",
    "SlidingGaussianReference",
    "ProductLocalLikelihood",
    "DiscreteEmpiricalLikelihood",
    "CustomLikelihood",
    "material_potential",
    "gaussian_mass",
    "log_gaussian_mass",
    "subspace_gaussian_mass",
    "log_subspace_gaussian_mass",
    "thermal_weight",
    "log_thermal_weight",
    "thermalize_discrete",
    "thermalize_against_subspace",
    "total_variation",
    "offdiagonal_mass",
    "kl_divergence",
    "sliding_gaussian_reference",
]


class DegenerateThermalizationError(RuntimeError):
    """Every thermalized weight underflowed to log 0."""


def _int_power(x: float, n: int) -> float:
    """x**n by repeated multiplication.

    Keeps powers of two exact: fl((x/2^k)^n) = fl(x^n) / 2^(k n), which the
    libm pow path does not guarantee.  Used so scaling laws hold bit-exactly.
    """
    if n < 0:
        return 1.0 / _int_power(x, -n)
    out = 1.0
    for _ in range(int(n)):
        out *= x
    return out


@dataclass(frozen=True)
class ThermalizationParams:
    """Inverse temperature beta, with the schedule base beta0 for reference."""

    beta: float
    beta0: float = 1.0

    def __post_init__(self) -> None:
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        if not (self.beta0 > 0.0 and np.isfinite(self.beta0)):
            raise ValueError("beta0 must be positive and finite")

    @property
    def quench_factor(self) -> float:
        """lambda = sqrt(beta / beta0), the concentration scale factor."""
        return float(np.sqrt(self.beta / self.beta0))


def material_potential(likelihood_value: float) -> float:
    """-log of a likelihood value; +inf at zero, negative values rejected."""
    v = float(likelihood_value)
    if v < 0.0:
        raise ValueError("likelihood values must be nonnegative")
    if v == 0.0:
        return float("inf")
    return -float(np.log(v))


def gaussian_mass(beta: float, metric: Metric) -> float:
    """Integral of exp(-beta ||xi||^2) over phase space: (pi/beta)^N / sqrt(det G)."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    n = metric.half_dim
    return _int_power(np.pi / beta, n) / float(np.sqrt(np.exp(metric.log_det)))


def log_gaussian_mass(beta: float, metric: Metric) -> float:
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    return metric.half_dim * float(np.log(np.pi / beta)) - 0.5 * metric.log_det


def subspace_gaussian_mass(beta: float, subspace: AffineSubspace) -> float:
    """Integral of exp(-beta ||xi||^2) over the subspace, metric-orthonormal coords."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if subspace.dim % 2 == 0:
        return _int_power(np.pi / beta, subspace.dim // 2)
    return float(np.sqrt(_int_power(np.pi / beta, subspace.dim)))


def log_subspace_gaussian_mass(beta: float, subspace: AffineSubspace) -> float:
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    return 0.5 * subspace.dim * float(np.log(np.pi / beta))


def log_thermal_weight(y, z, params: ThermalizationParams, metric: Metric) -> float:
    """log of the normalized concentration weight B_beta^-1 exp(-beta ||y-z||^2)."""
    from .geometry import as_phase_array

    delta = as_phase_array(y) - as_phase_array(z)
    d2 = float(np.dot(delta, metric.diag * delta))
    return -params.beta * d2 - log_gaussian_mass(params.beta, metric)


def thermal_weight(y, z, params: ThermalizationParams, metric: Metric) -> float:
    return float(np.exp(log_thermal_weight(y, z, params, metric)))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms: material points, optional paired admissible points.

    Weights are stored as logs; ``log_scale`` is a common factor kept outside
    the array so that measure rescaling is exact and cancels structurally in
    every normalized expectation.
    """

    points: np.ndarray
    log_weights: np.ndarray
    pair_points: np.ndarray = None
    log_scale: float = 0.0
    pair_distances: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        lw = np.asarray(self.log_weights, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (k, 2N) array")
        if lw.shape != (pts.shape[0],):
            raise ValueError("log_weights must have one entry per point")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValueError("log weights must be finite or -inf")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", lw)
        if self.pair_points is not None:
            pp = np.asarray(self.pair_points, dtype=float)
            if pp.shape != pts.shape:
                raise ValueError("pair_points must match points in shape")
            object.__setattr__(self, "pair_points", pp)
        if self.pair_distances is not None:
            pd = np.asarray(self.pair_distances, dtype=float)
            if pd.shape != (pts.shape[0],):
                raise ValueError("pair_distances must have one entry per point")
            object.__setattr__(self, "pair_distances", pd)

    @classmethod
    def from_weights(cls, points, weights, pair_points=None) -> "EmpiricalMeasure":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0.0) or np.any(np.isnan(w)):
            raise ValueError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        return cls(points=points, log_weights=lw, pair_points=pair_points)

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_paired(self) -> bool:
        return self.pair_points is not None

    def scale_weights(self, factor: float) -> "EmpiricalMeasure":
        """Multiply the measure by factor > 0 (log_scale only; atoms untouched)."""
        if not (factor > 0.0 and np.isfinite(factor)):
            raise ValueError("scale factor must be positive and finite")
        return replace(self, log_scale=self.log_scale + float(np.log(factor)))

    def shifted(self, dy=None, dz=None) -> "EmpiricalMeasure":
        """Translate material points by dy and paired points by dz."""
        pts = self.points if dy is None else self.points + np.asarray(dy, dtype=float)
        pp = self.pair_points
        if dz is not None:
            if pp is None:
                raise ValueError("cannot shift pair points of an unpaired measure")
            pp = pp + np.asarray(dz, dtype=float)
        return replace(self, points=pts, pair_points=pp, pair_distances=None)

    def log_total_mass(self) -> float:
        return float(logsumexp(self.log_weights)) + self.log_scale

    def total_mass(self) -> float:
        return float(np.exp(self.log_total_mass()))


def _pair_sq_distances(mu: EmpiricalMeasure, metric: Metric) -> np.ndarray:
    if not mu.is_paired:
        raise ValueError("a paired measure is required")
    if mu.pair_distances is not None:
        return mu.pair_distances**2
    delta = mu.points - mu.pair_points
    return metric.sq_norm_many(delta)


def thermalize_discrete(
    mu: EmpiricalMeasure, params: ThermalizationParams, metric: Metric
) -> EmpiricalMeasure:
    """Reweight a paired measure by the normalized concentration weight.

    New log weight: log c_i - beta ||y_i - z_i||^2 - log B_beta.  Raises
    DegenerateThermalizationError when every atom underflows to log 0.
    """
    d2 = _pair_sq_distances(mu, metric)
    log_b = log_gaussian_mass(params.beta, metric)
    lw = mu.log_weights - params.beta * d2 - log_b
    if np.all(np.isneginf(lw)):
        raise DegenerateThermalizationError(
            "degenerate thermalization: all weights vanished at "
            f"beta = {params.beta:g}"
        )
    return replace(mu, log_weights=lw, pair_distances=np.sqrt(d2))


def thermalize_against_subspace(
    mu: EmpiricalMeasure,
    subspace: AffineSubspace,
    params: ThermalizationParams,
    metric: Metric = None,
) -> EmpiricalMeasure:
    """Pair a material measure with its projections, thermally weighted.

    Each atom y_i is paired with z_i = P_E y_i; the new log weight is
    log c_i - beta d_i^2 + log(C_beta / B_beta), where d_i is the distance to
    the subspace and the prefactor accounts for the Gaussian mass spread along
    the subspace (surface measure in metric-orthonormal coordinates).
    """
    if metric is None:
        metric = subspace.metric
    if mu.is_paired:
        raise ValueError("expected an unpaired material measure")
    projected = subspace.project_many(mu.points)
    d = metric.norm_many(mu.points - projected)
    prefactor = log_subspace_gaussian_mass(params.beta, subspace) - log_gaussian_mass(
        params.beta, metric
    )
    lw = mu.log_weights - params.beta * d * d + prefactor
    if np.all(np.isneginf(lw)):
        raise DegenerateThermalizationError(
            "degenerate thermalization: all weights vanished at "
            f"beta = {params.beta:g}"
        )
    return replace(mu, log_weights=lw, pair_points=projected, pair_distances=d)


def total_variation(mu: EmpiricalMeasure) -> float:
    """Total mass of a nonnegative discrete measure."""
    return mu.total_mass()


def offdiagonal_mass(mu: EmpiricalMeasure, delta: float, metric: Metric = None) -> float:
    """Mass of the atoms whose pair distance is at least delta.

    Uses the distances cached at thermalization when available; otherwise the
    metric is required to compute them.
    """
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    if mu.pair_distances is not None:
        d = mu.pair_distances
    else:
        if metric is None:
            raise ValueError("metric required when pair distances are not cached")
        d2 = _pair_sq_distances(mu, metric)
        d = np.sqrt(d2)
    mask = d >= delta
    if not np.any(mask):
        return 0.0
    return float(np.exp(logsumexp(mu.log_weights[mask]) + mu.log_scale))


def _require_same_support(nu: EmpiricalMeasure, mu: EmpiricalMeasure) -> None:
    if nu.points.shape != mu.points.shape or not np.array_equal(nu.points, mu.points):
        raise ValueError("measures must share the same support points")
    if nu.is_paired != mu.is_paired:
        raise ValueError("measures must both be paired or both unpaired")
    if nu.is_paired and not np.array_equal(nu.pair_points, mu.pair_points):
        raise ValueError("measures must share the same support points")


def kl_divergence(nu: EmpiricalMeasure, mu: EmpiricalMeasure) -> float:
    """Relative-entropy functional sum_i m_i h(n_i / m_i), h(x) = x log x - x + 1.

    Equals sum_i n_i log(n_i / m_i) - |nu| + |mu|.  Nonnegative; zero exactly
    at nu = mu; +inf when nu puts mass where mu has none.
    """
    _require_same_support(nu, mu)
    log_n = nu.log_weights + nu.log_scale
    log_m = mu.log_weights + mu.log_scale
    off_support = (log_m == -np.inf) & (log_n > -np.inf)
    if np.any(off_support):
        return float("inf")
    n_mass = np.exp(log_n)
    m_mass = np.exp(log_m)
    both = (log_n > -np.inf) & (log_m > -np.inf)
    entropy = float(np.sum(n_mass[both] * (log_n[both] - log_m[both])))
    # Identical mass sums so that the functional is exactly zero at nu = mu.
    return entropy - float(np.sum(n_mass)) + float(np.sum(m_mass))


# ---------------------------------------------------------------------------
# Likelihood models


class LikelihoodModel:
    """Base for likelihood densities on phase space or on pairs.

    Subclasses define ``dim`` (2N), ``pair`` (density on Z x Z when True), and
    ``log_density(rows)`` or ``log_density_pair(y_rows, z_rows)``; both accept
    (k, dim) arrays and return (k,) log values.  Likelihoods are defined
    modulo positive constants.
    """

    dim: int
    pair: bool = False

    def log_density(self, rows: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density_pair(self, y_rows: np.ndarray, z_rows: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not support sampling")


@dataclass(frozen=True)
class GaussianGraphLikelihood(LikelihoodModel):
    """Material likelihood concentrated on the linear graphs stress = C strain.

    log density: -sum_e w_e (stress_e - C_e strain_e)^2 / (2 C_e), i.e. a
    Gaussian ridge across each member's graph, flat along it.  Sampling draws
    strains uniformly from [-strain_halfwidth, strain_halfwidth] and stresses
    from the conditional Gaussian on the ridge.
    """

    moduli: np.ndarray
    weights: np.ndarray = None
    strain_halfwidth: float = 3.0
    pair = False

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.moduli, dtype=float))
        if np.any(c <= 0.0):
            raise ValueError("moduli must be positive")
        w = (
            np.ones_like(c)
            if self.weights is None
            else np.atleast_1d(np.asarray(self.weights, dtype=float))
        )
        if w.shape != c.shape or np.any(w <= 0.0):
            raise ValueError("weights must be positive, one per member")
        object.__setattr__(self, "moduli", c)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return 2 * self.moduli.size

    def log_density(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        m = self.moduli.size
        r = rows[:, m:] - rows[:, :m] * self.moduli
        return -0.5 * (r * r * (self.weights / self.moduli)).sum(axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m = self.moduli.size
        strain = rng.uniform(-self.strain_halfwidth, self.strain_halfwidth, size=(n, m))
        resid_std = np.sqrt(self.moduli / self.weights)
        stress = strain * self.moduli + rng.normal(size=(n, m)) * resid_std
        return np.concatenate([strain, stress], axis=1)


@dataclass(frozen=True)
class SlidingGaussianReference:
    """Assembled quadratic form of the pair likelihood and its spectrum."""

    a: np.ndarray
    b: np.ndarray
    theta: float
    half_dim: int
    q_matrix: np.ndarray
    eig_min: float
    eig_max: float
    transversal: bool


def sliding_gaussian_reference(
    a1: float, a2: float, theta: float = None, b1: float = None, b2: float = None, half_dim: int = 1
) -> SlidingGaussianReference:
    """Quadratic form Q of the pair likelihood exp(-|a.y|^2/2 - |b.z|^2/2).

    With b the rotation of a by theta, the spectrum is closed form:
    |a|^2 (1 -+ |cos theta|), each with multiplicity N.  The pair of ridges is
    transversal iff theta is not a multiple of pi (eig_min > 0).
    """
    a = np.array([float(a1), float(a2)])
    if np.allclose(a, 0.0):
        raise ValueError("the coefficient pair a must be nonzero")
    if (theta is None) == (b1 is None and b2 is None):
        raise ValueError("provide either theta or explicit (b1, b2)")
    if theta is not None:
        ct, st = np.cos(theta), np.sin(theta)
        b = np.array([ct * a[0] - st * a[1], st * a[0] + ct * a[1]])
    else:
        b = np.array([float(b1), float(b2)])
        if np.allclose(b, 0.0):
            raise ValueError("the coefficient pair b must be nonzero")
    n = int(half_dim)
    if n < 1:
        raise ValueError("half_dim must be at least 1")
    eye = np.eye(n)
    q = np.block(
        [
            [(a[0] ** 2 + b[0] ** 2) * eye, (a[0] * a[1] + b[0] * b[1]) * eye],
            [(a[0] * a[1] + b[0] * b[1]) * eye, (a[1] ** 2 + b[1] ** 2) * eye],
        ]
    )
    if theta is not None:
        norm2 = float(a @ a)
        eig_min = norm2 * (1.0 - abs(np.cos(theta)))
        eig_max = norm2 * (1.0 + abs(np.cos(theta)))
        transversal = abs(np.sin(theta)) > 1e-12
    else:
        eigs = np.linalg.eigvalsh(q)
        eig_min, eig_max = float(eigs[0]), float(eigs[-1])
        transversal = eig_min > 1e-12 * max(eig_max, 1e-300)
    return SlidingGaussianReference(
        a=a,
        b=b,
        theta=float(theta) if theta is not None else float("nan"),
        half_dim=n,
        q_matrix=q,
        eig_min=eig_min,
        eig_max=eig_max,
        transversal=bool(transversal),
    )


@dataclass(frozen=True)
class SlidingGaussianLikelihood(LikelihoodModel):
    """Pair likelihood of two Gaussian ridges sliding across each other.

    Material side exp(-|a1 y_I + a2 y_II|^2 / 2) with y = (y_I, y_II) the two
    half-blocks; admissible side likewise with coefficients b.  b defaults to
    the rotation of a by theta.
    """

    a1: float
    a2: float
    theta: float = None
    b1: float = None
    b2: float = None
    half_dim: int = 1
    sampling_halfwidth: float = 8.0
    pair = True

    def __post_init__(self) -> None:
        ref = sliding_gaussian_reference(
            self.a1, self.a2, theta=self.theta, b1=self.b1, b2=self.b2, half_dim=self.half_dim
        )
        object.__setattr__(self, "_reference", ref)

    def reference(self) -> SlidingGaussianReference:
        return self._reference

    @property
    def dim(self) -> int:
        return 2 * self.half_dim

    def _half_log_density(self, rows: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n = self.half_dim
        ridge = coeff[0] * rows[:, :n] + coeff[1] * rows[:, n:]
        return -0.5 * (ridge * ridge).sum(axis=1)

    def log_density_material(self, rows: np.ndarray) -> np.ndarray:
        return self._half_log_density(rows, self._reference.a)

    def log_density_admissible(self, rows: np.ndarray) -> np.ndarray:
        return self._half_log_density(rows, self._reference.b)

    def log_density_pair(self, y_rows: np.ndarray, z_rows: np.ndarray) -> np.ndarray:
        return self.log_density_material(y_rows) + self.log_density_admissible(z_rows)

    def diagonal_log_density(self, xi_rows: np.ndarray) -> np.ndarray:
        """Limit density on the diagonal in xi = (y + z) / sqrt(2): -xi.Q.xi / 4."""
        xi = np.atleast_2d(np.asarray(xi_rows, dtype=float))
        q = self._reference.q_matrix
        return -0.25 * np.einsum("ij,jk,ik->i", xi, q, xi)

    def _sample_half(self, n: int, rng, coeff: np.ndarray) -> np.ndarray:
        # Ridge coordinate c.v is standard normal; the sliding (kernel)
        # coordinate is uniform on +-sampling_halfwidth.  The map has constant
        # Jacobian, so the draw follows the density on the slab.
        m = self.half_dim
        norm2 = float(coeff @ coeff)
        unit = coeff / np.sqrt(norm2)
        ridge = rng.normal(size=(n, m))
        slide = rng.uniform(-self.sampling_halfwidth, self.sampling_halfwidth, size=(n, m))
        first = ridge * (coeff[0] / norm2) - slide * unit[1]
        second = ridge * (coeff[1] / norm2) + slide * unit[0]
        return np.concatenate([first, second], axis=1)

    def sample(self, n: int, rng) -> tuple:
        """Draw n (y, z) pairs; y and z are independent under this model."""
        y = self._sample_half(n, rng, self._reference.a)
        z = self._sample_half(n, rng, self._reference.b)
        return y, z


@dataclass(frozen=True)
class ProductLocalLikelihood(LikelihoodModel):
    """Member-wise product of local log densities on (strain_e, stress_e)."""

    log_locals: tuple
    block_dim: int = 1
    samplers: tuple = None
    pair = False

    @property
    def dim(self) -> int:
        return 2 * self.block_dim * len(self.log_locals)

    def _local_block(self, rows: np.ndarray, e: int) -> np.ndarray:
        d = self.block_dim
        n = self.dim // 2
        return np.concatenate(
            [rows[:, e * d : (e + 1) * d], rows[:, n + e * d : n + (e + 1) * d]], axis=1
        )

    def log_density(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        total = np.zeros(rows.shape[0])
        for e, local in enumerate(self.log_locals):
            total += np.asarray(local(self._local_block(rows, e)), dtype=float)
        return total

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.samplers is None:
            raise NotImplementedError("no samplers attached to this product model")
        m, d = len(self.log_locals), self.block_dim
        half = self.dim // 2
        out = np.zeros((n, self.dim))
        for e, sampler in enumerate(self.samplers):
            local = np.asarray(sampler(n, rng), dtype=float)
            out[:, e * d : (e + 1) * d] = local[:, :d]
            out[:, half + e * d : half + (e + 1) * d] = local[:, d:]
        return out


@dataclass(frozen=True)
class DiscreteEmpiricalLikelihood(LikelihoodModel):
    """A measure already given as weighted atoms (dataset input)."""

    measure: EmpiricalMeasure

    @property
    def dim(self) -> int:
        return self.measure.dim

    @property
    def pair(self) -> bool:
        return self.measure.is_paired


@dataclass(frozen=True)
class CustomLikelihood(LikelihoodModel):
    """Arbitrary vectorized log density; ``pair_fn`` takes (y_rows, z_rows)."""

    fn: object
    dim: int
    pair: bool = False
    sampler: object = None

    def log_density(self, rows: np.ndarray) -> np.ndarray:
        if self.pair:
            raise ValueError("pair likelihood: use log_density_pair")
        return np.asarray(self.fn(np.atleast_2d(rows)), dtype=float)

    def log_density_pair(self, y_rows: np.ndarray, z_rows: np.ndarray) -> np.ndarray:
        if not self.pair:
            raise ValueError("univariate likelihood: use log_density")
        return np.asarray(self.fn(np.atleast_2d(y_rows), np.atleast_2d(z_rows)), dtype=float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError("no sampler attached to this likelihood")
        return np.asarray(self.sampler(n, rng), dtype=float)
