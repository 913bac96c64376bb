"""Bar trusses: kinematics, equilibrium, constraint subspaces, Gaussian oracle.

A truss with m bars and n free degrees of freedom defines the affine
constraint set E = z0 + E0 in phase space R^{2m}: strains compatible with a
displacement (plus prescribed offsets) and stresses in equilibrium with the
applied load.  E0 is spanned by the compatibility image (strain side) and the
self-stress modes (stress side), so dim(E) = m always.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import AffineSubspace, Metric, as_phase_array, nullspace_basis

__all__ = [
    "TrussModel",
    "GaussianTrussOracle",
    "UnequilibrableLoadError",
    "compatibility_matrix",
    "self_stress_basis",
    "minimum_norm_stress",
    "truss_metric",
    "build_constraint_set",
    "displacement_of_state",
    "gaussian_truss_oracle",
    "oracle_density",
]

COMPONENT_NAMES = ("x", "y", "z")


class UnequilibrableLoadError(ValueError):
    """The applied load is not in the range of the equilibrium operator."""


@dataclass(frozen=True)
class TrussModel:
    """Geometry, material, and boundary data of a pin-jointed bar truss.

    Parameters
    ----------
    nodes : (k, s) array
        Node coordinates, s in {2, 3}.
    bars : (m, 2) int array
        Endpoint node indices per bar.
    moduli : (m,) array
        Reference moduli C_e (positive).
    areas : (m,) array, optional
        Cross sections; default 1.  Member weights are area * length.
    supports : tuple of (node, component)
        Fixed degrees of freedom.
    loads : tuple of (node, component, value)
        Point forces on free degrees of freedom.
    strain_offsets : (m,) array, optional
        Prescribed strain offsets g_e; default 0.
    """

    nodes: np.ndarray
    bars: np.ndarray
    moduli: np.ndarray
    areas: np.ndarray = None
    supports: tuple = ()
    loads: tuple = ()
    strain_offsets: np.ndarray = None
    lengths: np.ndarray = field(init=False, repr=False, compare=False)
    directions: np.ndarray = field(init=False, repr=False, compare=False)
    free_dofs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise ValueError("nodes must be a (k, 2) or (k, 3) coordinate array")
        bars = np.asarray(self.bars, dtype=int)
        if bars.ndim != 2 or bars.shape[1] != 2 or bars.shape[0] == 0:
            raise ValueError("bars must be a nonempty (m, 2) index array")
        m = bars.shape[0]
        if np.any(bars < 0) or np.any(bars >= nodes.shape[0]):
            raise ValueError("bar endpoint index out of range")
        if np.any(bars[:, 0] == bars[:, 1]):
            raise ValueError("bar endpoints must be distinct nodes")
        moduli = np.asarray(self.moduli, dtype=float).reshape(-1)
        if moduli.size != m or np.any(moduli <= 0.0):
            raise ValueError("moduli must be m positive values")
        areas = (
            np.ones(m)
            if self.areas is None
            else np.asarray(self.areas, dtype=float).reshape(-1)
        )
        if areas.size != m or np.any(areas <= 0.0):
            raise ValueError("areas must be m positive values")
        offsets = (
            np.zeros(m)
            if self.strain_offsets is None
            else np.asarray(self.strain_offsets, dtype=float).reshape(-1)
        )
        if offsets.size != m:
            raise ValueError("strain_offsets must have one value per bar")

        deltas = nodes[bars[:, 1]] - nodes[bars[:, 0]]
        lengths = np.linalg.norm(deltas, axis=1)
        if np.any(lengths <= 1e-12 * max(1.0, np.max(np.abs(nodes)))):
            raise ValueError("zero-length bar")
        directions = deltas / lengths[:, None]

        sdim = nodes.shape[1]
        supports = tuple((int(a), int(c)) for a, c in self.supports)
        for a, c in supports:
            if not (0 <= a < nodes.shape[0]) or not (0 <= c < sdim):
                raise ValueError(f"support ({a}, {c}) out of range")
        fixed = set(supports)
        free = tuple(
            (a, c)
            for a in range(nodes.shape[0])
            for c in range(sdim)
            if (a, c) not in fixed
        )
        if not free:
            raise ValueError("no free degrees of freedom")
        loads = tuple((int(a), int(c), float(v)) for a, c, v in self.loads)
        for a, c, _ in loads:
            if not (0 <= a < nodes.shape[0]) or not (0 <= c < sdim):
                raise ValueError(f"load target ({a}, {c}) out of range")
            if (a, c) in fixed:
                raise ValueError(f"load applied to fixed degree of freedom ({a}, {c})")

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "bars", bars)
        object.__setattr__(self, "moduli", moduli)
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "strain_offsets", offsets)
        object.__setattr__(self, "supports", supports)
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "free_dofs", free)

    @property
    def n_bars(self) -> int:
        return self.bars.shape[0]

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    @property
    def member_weights(self) -> np.ndarray:
        """Metric weights w_e = area * length (bar volumes)."""
        return self.areas * self.lengths

    def load_vector(self) -> np.ndarray:
        f = np.zeros(self.n_free)
        index = {dof: i for i, dof in enumerate(self.free_dofs)}
        for a, c, v in self.loads:
            f[index[(a, c)]] += v
        return f


def compatibility_matrix(truss: TrussModel) -> np.ndarray:
    """Strain-displacement matrix B, shape (m, n): strain = B u + offsets.

    Row e holds +/- direction components / length at the free endpoint dofs.
    Raises if a free degree of freedom touches no bar (dangling node).
    """
    index = {dof: i for i, dof in enumerate(truss.free_dofs)}
    b = np.zeros((truss.n_bars, truss.n_free))
    for e in range(truss.n_bars):
        a, bnode = truss.bars[e]
        coeff = truss.directions[e] / truss.lengths[e]
        for c, val in enumerate(coeff):
            if (bnode, c) in index:
                b[e, index[(bnode, c)]] += val
            if (a, c) in index:
                b[e, index[(a, c)]] -= val
    connected = set(truss.bars.ravel().tolist())
    for node, comp in truss.free_dofs:
        if node not in connected:
            raise ValueError(f"free node {node} touches no bar (dangling node)")
    return b


def self_stress_basis(truss: TrussModel, b: np.ndarray = None) -> np.ndarray:
    """Orthonormal basis of the self-equilibrated stress modes.

    Columns A_j satisfy B^T W A = 0 (W the member-weight diagonal), i.e. the
    stresses in equilibrium with zero load; for unit weights this is Ker(B^T).
    """
    if b is None:
        b = compatibility_matrix(truss)
    weighted = truss.member_weights[:, None] * b
    return nullspace_basis(weighted.T)


def minimum_norm_stress(truss: TrussModel, b: np.ndarray = None) -> np.ndarray:
    """Least-squares minimum-norm stress equilibrating the load.

    Raises UnequilibrableLoadError when the load has a component outside the
    range of the equilibrium operator (a mechanism excited by the load).
    """
    if b is None:
        b = compatibility_matrix(truss)
    f = truss.load_vector()
    equilibrium = (truss.member_weights[:, None] * b).T
    sigma0, *_ = np.linalg.lstsq(equilibrium, f, rcond=None)
    residual = np.linalg.norm(equilibrium @ sigma0 - f)
    if residual > 1e-8 * max(1.0, np.linalg.norm(f)):
        raise UnequilibrableLoadError(
            f"unequilibrable load: residual {residual:.3e} outside equilibrium range"
        )
    return sigma0


def truss_metric(truss: TrussModel) -> Metric:
    return Metric(member_weights=truss.member_weights, member_moduli=truss.moduli)


def build_constraint_set(truss: TrussModel, metric: Metric = None) -> AffineSubspace:
    """Affine constraint set E = (offsets, sigma0) + {(B u, A v)}.

    Requires rank(B) = n (no mechanism).  dim(E) always equals the number of
    bars: rank(B) compatible strain directions plus m - rank(B) self-stress
    modes.
    """
    if metric is None:
        metric = truss_metric(truss)
    b = compatibility_matrix(truss)
    sigma0 = minimum_norm_stress(truss, b)
    rank = np.linalg.matrix_rank(b, tol=1e-10 * max(1.0, np.linalg.norm(b, 2)))
    if rank < truss.n_free:
        raise ValueError(
            f"compatibility matrix has rank {rank} < {truss.n_free}: the truss is a mechanism"
        )
    a = self_stress_basis(truss, b)
    m = truss.n_bars
    span = np.zeros((2 * m, truss.n_free + a.shape[1]))
    span[:m, : truss.n_free] = b
    span[m:, truss.n_free :] = a
    origin = np.concatenate([truss.strain_offsets, sigma0])
    return AffineSubspace.from_span(origin, span, metric)


def displacement_of_state(truss: TrussModel, z) -> np.ndarray:
    """Free-dof displacements of a constraint-set state (least squares).

    For z in E the strain block equals B u + offsets exactly, so this
    recovers u; off E it returns the least-squares fit.
    """
    z = as_phase_array(z)
    strain = z[: truss.n_bars]
    b = compatibility_matrix(truss)
    u, *_ = np.linalg.lstsq(b, strain - truss.strain_offsets, rcond=None)
    return u


@dataclass(frozen=True)
class GaussianTrussOracle:
    """Closed-form reference for the Gaussian-likelihood truss problem.

    The material likelihood exp(-0.5 sum_e (stress_e - C_e strain_e)^2 / C_e)
    restricted to the constraint set is Gaussian in the displacement and
    self-stress coordinates (u, v); this records its mean, the precision
    blocks, and its normalization.
    """

    mean_u: np.ndarray
    mean_v: np.ndarray
    stiffness: np.ndarray
    compliance: np.ndarray
    normalization: float
    likelihood_integral_uv: float
    likelihood_mass: float
    compatibility: np.ndarray
    self_stress: np.ndarray
    strain_origin: np.ndarray
    stress_origin: np.ndarray


def gaussian_truss_oracle(truss: TrussModel) -> GaussianTrussOracle:
    """Closed-form mean, precisions, and normalization on the constraint set.

    Restricted to unit member weights (area * length = 1 per bar), where the
    likelihood of a constraint state z(u, v) is exp(-Phi(u, v)) with Phi a
    quadratic form minimized at exactly zero.
    """
    weights = truss.member_weights
    if not np.allclose(weights, 1.0, rtol=0.0, atol=1e-12):
        raise ValueError("oracle requires unit member weights (area * length = 1)")
    b = compatibility_matrix(truss)
    a = self_stress_basis(truss, b)
    sigma0 = minimum_norm_stress(truss, b)
    c = truss.moduli
    eps0 = truss.strain_offsets
    stiffness = b.T @ (c[:, None] * b)
    compliance = a.T @ (a / c[:, None])
    rank = np.linalg.matrix_rank(b, tol=1e-10 * max(1.0, np.linalg.norm(b, 2)))
    if rank < truss.n_free:
        raise ValueError("oracle requires full-rank compatibility (no mechanism)")
    mean_u = np.linalg.solve(stiffness, b.T @ (sigma0 - c * eps0))
    if a.shape[1]:
        mean_v = np.linalg.solve(compliance, a.T @ (eps0 - sigma0 / c))
    else:
        mean_v = np.zeros(0)

    n_total = truss.n_free + a.shape[1]
    sign_k, logdet_k = np.linalg.slogdet(stiffness)
    sign_s, logdet_s = np.linalg.slogdet(compliance) if a.shape[1] else (1.0, 0.0)
    if sign_k <= 0.0 or sign_s <= 0.0:
        raise ValueError("stiffness and compliance blocks must be positive definite")
    log_integral = 0.5 * n_total * np.log(2.0 * np.pi) - 0.5 * (logdet_k + logdet_s)
    integral_uv = float(np.exp(log_integral))
    # Surface-measure correction from (u, v) coordinates to the Euclidean
    # Hausdorff measure on E; the self-stress factor is 1 for orthonormal A.
    _, logdet_btb = np.linalg.slogdet(b.T @ b)
    _, logdet_ata = np.linalg.slogdet(a.T @ a) if a.shape[1] else (1.0, 0.0)
    mass = float(np.exp(log_integral + 0.5 * (logdet_btb + logdet_ata)))
    return GaussianTrussOracle(
        mean_u=mean_u,
        mean_v=mean_v,
        stiffness=stiffness,
        compliance=compliance,
        normalization=float(np.exp(-log_integral)),
        likelihood_integral_uv=integral_uv,
        likelihood_mass=mass,
        compatibility=b,
        self_stress=a,
        strain_origin=eps0,
        stress_origin=sigma0,
    )


def oracle_density(oracle: GaussianTrussOracle, u, v=None) -> float:
    """Normalized Gaussian density of the restricted likelihood in (u, v)."""
    du = np.asarray(u, dtype=float).reshape(-1) - oracle.mean_u
    quad = float(du @ oracle.stiffness @ du)
    if oracle.mean_v.size:
        if v is None:
            raise ValueError("this oracle has self-stress coordinates; v is required")
        dv = np.asarray(v, dtype=float).reshape(-1) - oracle.mean_v
        quad += float(dv @ oracle.compliance @ dv)
    return oracle.normalization * float(np.exp(-0.5 * quad))
