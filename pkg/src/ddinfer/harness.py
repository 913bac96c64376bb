"""Quenching schedules, empirical data generation, and convergence studies.

A quenching schedule couples data resolutions delta_h (decreasing) with
inverse temperatures beta_h (increasing).  Writing lambda_h = sqrt(beta_h /
beta_0), the estimators of :mod:`ddinfer.inference` converge to the athermal
limit when lambda_h * delta_h decays to zero; quenching faster collapses the
thermal weights onto a handful of atoms, which the effective sample size
detects.

The studies in this module run that program end to end on two exactly solvable
instances: deterministic loading on a Gaussian-graph truss against the
closed-form oracle displacement, and random loading on the sliding-Gaussian
pair model against the closed-form diagonal-limit covariance.  Levels are
seeded independently (one stream per level), so reports are reproducible and
level order is immaterial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AffineSubspace, Metric
from .inference import (
    LocalQuadrature,
    QuantityOfInterest,
    expect_det_loading,
    expect_random_loading,
)
from .measures import (
    DegenerateThermalizationError,
    EmpiricalMeasure,
    GaussianGraphLikelihood,
    SlidingGaussianLikelihood,
    ThermalizationParams,
)
from .truss import (
    TrussModel,
    build_constraint_set,
    compatibility_matrix,
    gaussian_truss_oracle,
    truss_metric,
)

__all__ = [
    "NonTransversalError",
    "QuenchSchedule",
    "LevelRecord",
    "ExperimentReport",
    "CSV_COLUMNS",
    "schedule_validate",
    "grid_transport",
    "make_empirical",
    "run_convergence_study",
    "shifting_error_experiment",
    "qoi_displacement",
    "qoi_diagonal_moment",
    "default_truss_schedule",
    "default_sliding_schedule",
    "truss_displacement_study",
    "sliding_moment_study",
]

# Pair grids keep at most this many atoms after pruning.
MAX_GRID_ATOMS = 5_000_000

# Streaming block size (matrix entries) for pair-grid scans.
_PAIR_BLOCK_ENTRIES = 4_000_000

# Atoms this many nats below the heaviest one are dropped from grids; the
# discarded relative mass is below 1e-12 for any realistic atom count.
DEFAULT_PRUNE_NATS = 46.0


class NonTransversalError(ValueError):
    """Material and admissible factors are aligned; no integrable diagonal limit."""


@dataclass(frozen=True)
class QuenchSchedule:
    """Paired resolution/temperature ladder (delta_h, beta_h), h = 1..H."""

    beta0: float
    deltas: tuple
    betas: tuple

    def __post_init__(self) -> None:
        if self.beta0 <= 0.0:
            raise ValueError("beta0 must be positive")
        deltas = tuple(float(d) for d in np.atleast_1d(self.deltas))
        betas = tuple(float(b) for b in np.atleast_1d(self.betas))
        if len(deltas) != len(betas) or not deltas:
            raise ValueError("deltas and betas must be nonempty and equally long")
        if min(deltas) <= 0.0 or min(betas) <= 0.0:
            raise ValueError("resolutions and temperatures must be positive")
        if any(b <= a for a, b in zip(deltas[1:], deltas[:-1])):
            raise ValueError("deltas must be strictly decreasing")
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def geometric(
        cls,
        beta0: float = 1.0,
        delta1: float = 1.6,
        ratio: float = 0.5,
        exponent: float = 1.0,
        horizon: int = 6,
    ) -> "QuenchSchedule":
        """delta_h = delta1 ratio^(h-1), beta_h = beta0 (delta1/delta_h)^exponent."""
        if not 0.0 < ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        if delta1 <= 0.0:
            raise ValueError("delta1 must be positive")
        deltas = delta1 * ratio ** np.arange(horizon)
        betas = beta0 * (delta1 / deltas) ** exponent
        return cls(beta0=beta0, deltas=tuple(deltas), betas=tuple(betas))

    @property
    def horizon(self) -> int:
        return len(self.deltas)

    @property
    def lambdas(self) -> np.ndarray:
        """Rescaling factors sqrt(beta_h / beta0)."""
        return np.sqrt(np.asarray(self.betas) / self.beta0)

    @property
    def lambda_deltas(self) -> np.ndarray:
        """The decay sequence lambda_h * delta_h that governs convergence."""
        return self.lambdas * np.asarray(self.deltas)


def schedule_validate(schedule: QuenchSchedule) -> tuple:
    """Decide whether a schedule quenches slowly enough, with a limit estimate.

    Fits a geometric trend to lambda_h * delta_h.  Valid means the fitted
    ratio decays fast enough that the sequence drops below a quarter of its
    initial value within max(horizon, 8) levels; this quantifies "decreasing
    toward zero" on a finite ladder.  The limit estimate is 0 for a decaying
    trend, +inf for a growing one, and the geometric mean of the observed
    values on the borderline.
    """
    if schedule.horizon < 3:
        raise ValueError("schedule validation needs at least 3 levels")
    betas = np.asarray(schedule.betas)
    if np.any(np.diff(betas) <= 0.0):
        raise ValueError("beta sequence must be strictly increasing")
    decay = np.asarray(schedule.lambda_deltas)
    fit_ratio = float(np.exp(np.mean(np.log(decay[1:] / decay[:-1]))))
    levels = max(schedule.horizon, 8)
    valid = bool(fit_ratio < 4.0 ** (-1.0 / (levels - 1)))
    if fit_ratio < 1.0 - 1e-9:
        limit = 0.0
    elif fit_ratio > 1.0 + 1e-9:
        limit = math.inf
    else:
        limit = float(np.exp(np.mean(np.log(decay))))
    return valid, limit


def grid_transport(points, delta: float) -> np.ndarray:
    """Componentwise projection onto the lattice delta Z; halves round up."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    pts = np.asarray(points, dtype=float)
    return delta * np.floor(pts / delta + 0.5)


@dataclass(frozen=True)
class LevelRecord:
    """One study level: schedule point, estimate, error, and diagnostics."""

    h: int
    beta: float
    delta: float
    lambda_delta: float
    expectation: float
    reference: float
    abs_err: float
    rel_err: float
    ess: float
    tv: float
    degenerate: bool = False


CSV_COLUMNS = (
    "h",
    "beta",
    "delta",
    "lambda_delta",
    "expectation",
    "reference",
    "abs_err",
    "rel_err",
    "ess",
    "tv",
)


@dataclass(frozen=True)
class ExperimentReport:
    """Per-level records of a convergence study plus the overall verdict."""

    label: str
    schedule: QuenchSchedule
    rows: tuple
    verdict: bool

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            fields = [str(row.h)]
            fields += [repr(float(getattr(row, name))) for name in CSV_COLUMNS[1:]]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        last = self.rows[-1]
        return {
            "label": self.label,
            "verdict": "converging" if self.verdict else "not converging",
            "levels": len(self.rows),
            "final_expectation": last.expectation,
            "reference": last.reference,
            "final_abs_err": last.abs_err,
            "final_rel_err": last.rel_err,
            "final_ess": last.ess,
        }


def _verdict(rows) -> bool:
    """Converging: strictly decreasing |error| on the last 3 levels, final ESS >= 10."""
    if len(rows) < 3:
        return False
    tail = rows[-3:]
    errors = [row.abs_err for row in tail]
    if any(row.degenerate for row in tail) or not all(np.isfinite(errors)):
        return False
    return errors[0] > errors[1] > errors[2] and rows[-1].ess >= 10.0


def _level_record(h, beta, delta, lambda_delta, result, reference) -> LevelRecord:
    abs_err = abs(result.expectation - reference)
    if reference != 0.0:
        rel_err = abs_err / abs(reference)
    else:
        rel_err = 0.0 if abs_err == 0.0 else math.inf
    return LevelRecord(
        h=h,
        beta=beta,
        delta=delta,
        lambda_delta=lambda_delta,
        expectation=result.expectation,
        reference=reference,
        abs_err=abs_err,
        rel_err=rel_err,
        ess=result.effective_sample_size,
        tv=result.total_variation,
        degenerate=result.degenerate,
    )


def _degenerate_record(h, beta, delta, lambda_delta, reference) -> LevelRecord:
    nan = math.nan
    return LevelRecord(h, beta, delta, lambda_delta, nan, reference, nan, nan, 0.0, 0.0, True)


def _grid_axis(delta: float, box) -> np.ndarray:
    """Cell centers lo + delta (k + 1/2) of a box split into whole cells."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if np.isscalar(box):
        lo, hi = -float(box), float(box)
    else:
        lo, hi = (float(b) for b in box)
    if hi <= lo:
        raise ValueError("box upper bound must exceed the lower bound")
    cells = (hi - lo) / delta
    rounded = round(cells)
    if rounded < 1 or abs(cells - rounded) > 1e-9 * max(1.0, abs(rounded)):
        raise ValueError("box length must be a whole number of cells")
    return lo + delta * (np.arange(rounded) + 0.5)


def _lattice(axis: np.ndarray, dim: int) -> np.ndarray:
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _plain_grid_measure(model, delta, axis, prune_nats, max_atoms) -> EmpiricalMeasure:
    dim = model.dim
    if len(axis) ** dim > max_atoms:
        raise ValueError("grid too fine for the box; enlarge delta or shrink the box")
    points = _lattice(axis, dim)
    log_density = np.asarray(model.log_density(points), dtype=float)
    top = np.max(log_density)
    if top == -np.inf:
        raise ValueError("the model carries no mass inside the box")
    if prune_nats is None:
        keep = np.ones(log_density.shape[0], dtype=bool)
    else:
        keep = log_density >= top - prune_nats
    return EmpiricalMeasure(
        points=points[keep],
        log_weights=log_density[keep],
        log_scale=dim * math.log(delta),
    )


def _pair_grid_measure(
    model, delta, axis, prune_nats, thermal_beta, metric, max_atoms
) -> EmpiricalMeasure:
    """Product lattice of material/admissible cells, streamed in blocks.

    When ``thermal_beta`` is given, pairs are ranked by data log-density minus
    beta d(y, z)^2 and pruned against the best pair; the resulting measure is
    tailored for thermalization at that (or a lower) beta, where the dropped
    pairs are negligible.  Without it, ranking uses the data density alone.
    """
    if thermal_beta is not None and metric is None:
        raise ValueError("thermal pruning needs the phase-space metric")
    dim = model.dim
    side = _lattice(axis, dim)
    count = side.shape[0]
    separable = hasattr(model, "log_density_material") and hasattr(
        model, "log_density_admissible"
    )
    if separable:
        log_y = np.asarray(model.log_density_material(side), dtype=float)
        log_z = np.asarray(model.log_density_admissible(side), dtype=float)
    if thermal_beta is not None:
        scaled = side * metric.diag
        sq_norms = np.einsum("ij,ij->i", side, scaled)

    block = max(1, _PAIR_BLOCK_ENTRIES // count)

    def scores(start, stop):
        chunk = side[start:stop]
        if separable:
            total = log_y[start:stop, None] + log_z[None, :]
        else:
            rows = np.repeat(chunk, count, axis=0)
            cols = np.tile(side, (stop - start, 1))
            total = np.asarray(
                model.log_density_pair(rows, cols), dtype=float
            ).reshape(stop - start, count)
        if thermal_beta is not None:
            cross = chunk @ scaled.T
            d2 = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * cross
            total = total - thermal_beta * d2
        return total

    top = -np.inf
    for start in range(0, count, block):
        top = max(top, float(np.max(scores(start, min(start + block, count)))))
    if top == -np.inf:
        raise ValueError("the model carries no mass inside the box")

    cut = -np.inf if prune_nats is None else top - prune_nats
    y_parts, z_parts = [], []
    kept = 0
    for start in range(0, count, block):
        stop = min(start + block, count)
        rows_idx, cols_idx = np.nonzero(scores(start, stop) >= cut)
        kept += rows_idx.size
        if kept > max_atoms:
            raise ValueError(
                "pair grid keeps too many atoms; enlarge delta, shrink the box, "
                "or prune harder"
            )
        y_parts.append(side[rows_idx + start])
        z_parts.append(side[cols_idx])
    y_points = np.concatenate(y_parts, axis=0)
    z_points = np.concatenate(z_parts, axis=0)
    log_weights = np.asarray(model.log_density_pair(y_points, z_points), dtype=float)
    return EmpiricalMeasure(
        points=y_points,
        log_weights=log_weights,
        pair_points=z_points,
        log_scale=2 * dim * math.log(delta),
    )


def make_empirical(
    model,
    method: str = "sample",
    *,
    n: int = None,
    seed=0,
    delta: float = None,
    box=None,
    prune_nats: float = DEFAULT_PRUNE_NATS,
    thermal_beta: float = None,
    metric: Metric = None,
    max_atoms: int = MAX_GRID_ATOMS,
) -> EmpiricalMeasure:
    """Empirical measure from a likelihood model.

    ``sample`` draws n i.i.d. points (pairs, for pair models) with uniform
    weights 1/n.  ``grid`` places atoms at the midpoints of a uniform tiling
    of the box with weights density x cell volume; pair models get the product
    lattice, streamed and pruned (see :func:`_pair_grid_measure`).  The box is
    a scalar half-width or a (lo, hi) pair shared by all axes, and must hold a
    whole number of cells.
    """
    if method == "sample":
        if n is None or n < 1:
            raise ValueError("sampling needs a positive atom count")
        rng = np.random.default_rng(seed)
        weights = np.full(n, 1.0 / n)
        drawn = model.sample(n, rng)
        if getattr(model, "pair", False):
            y_rows, z_rows = drawn
            return EmpiricalMeasure.from_weights(y_rows, weights, pair_points=z_rows)
        return EmpiricalMeasure.from_weights(drawn, weights)
    if method == "grid":
        if delta is None or box is None:
            raise ValueError("grid generation needs delta and box")
        axis = _grid_axis(delta, box)
        if getattr(model, "pair", False):
            return _pair_grid_measure(
                model, delta, axis, prune_nats, thermal_beta, metric, max_atoms
            )
        return _plain_grid_measure(model, delta, axis, prune_nats, max_atoms)
    raise ValueError(f"unknown data method: {method!r}")


def _snap_half_width(half_width: float, delta: float) -> float:
    """Symmetric box edge on the half-cell lattice, so centers land on delta Z."""
    steps = max(1, round(half_width / delta))
    return (steps + 0.5) * delta


def run_convergence_study(
    model,
    schedule: QuenchSchedule,
    qoi: QuantityOfInterest,
    reference: float,
    *,
    metric: Metric,
    subspace: AffineSubspace = None,
    data: str = "sample",
    box: float = None,
    samples0: int = 1000,
    sample_growth: float = 3.5,
    seed: int = 0,
    quadrature: LocalQuadrature = LocalQuadrature(),
    prune_nats: float = DEFAULT_PRUNE_NATS,
    label: str = "study",
) -> ExperimentReport:
    """Estimate E[f] along the schedule and compare each level to the reference.

    Pair models use the random-loading estimator; univariate models need the
    constraint ``subspace`` and use the deterministic-loading estimator.  With
    ``data="sample"`` the level-h atom count is samples0 (delta_1/delta_h)**
    sample_growth, drawn from the stream (seed, h); with ``data="grid"`` the
    lattice resolution is delta_h on a symmetric box of the given half-width
    (snapped so that centers lie on delta Z).  Degenerate levels are recorded
    with zero ESS rather than aborting the study.
    """
    pair = bool(getattr(model, "pair", False))
    if not pair and subspace is None:
        raise ValueError("deterministic-loading studies need the constraint subspace")
    if data not in ("sample", "grid"):
        raise ValueError(f"unknown data method: {data!r}")
    if data == "grid" and box is None:
        raise ValueError("grid studies need a box half-width")
    delta1 = schedule.deltas[0]
    rows = []
    for index in range(schedule.horizon):
        h = index + 1
        delta = schedule.deltas[index]
        beta = schedule.betas[index]
        lam_delta = float(schedule.lambda_deltas[index])
        params = ThermalizationParams(beta=beta, beta0=schedule.beta0)
        try:
            if data == "sample":
                n_h = int(np.ceil(samples0 * (delta1 / delta) ** sample_growth))
                mu = make_empirical(model, "sample", n=n_h, seed=[seed, h])
            else:
                half = _snap_half_width(box, delta)
                mu = make_empirical(
                    model,
                    "grid",
                    delta=delta,
                    box=(-half, half),
                    prune_nats=prune_nats,
                    thermal_beta=beta if pair else None,
                    metric=metric,
                )
            if pair:
                result = expect_random_loading(mu, qoi, params, metric)
            else:
                result = expect_det_loading(
                    mu, subspace, qoi, params, metric, quadrature, prune_nats=prune_nats
                )
            rows.append(_level_record(h, beta, delta, lam_delta, result, reference))
        except DegenerateThermalizationError:
            rows.append(_degenerate_record(h, beta, delta, lam_delta, reference))
    rows = tuple(rows)
    return ExperimentReport(label=label, schedule=schedule, rows=rows, verdict=_verdict(rows))


def shifting_error_experiment(
    model,
    shifts,
    schedule: QuenchSchedule,
    qoi: QuantityOfInterest,
    reference: float,
    *,
    metric: Metric,
    direction: np.ndarray = None,
    data: str = "grid",
    box: float = 8.0,
    samples0: int = 1000,
    sample_growth: float = 1.5,
    seed: int = 0,
    prune_nats: float = 60.0,
    label: str = "shifting",
) -> ExperimentReport:
    """Convergence study on pair data contaminated by level-dependent shifts.

    At level h the material points move by u_h and the admissible points by
    v_h along ``direction`` (default: first phase coordinate) before
    thermalization.  Equal shifts leave the thermal weights untouched; a
    difference u_h - v_h tilts them by exp(-2 beta_h (u_h - v_h) eta) and the
    estimate survives only when lambda_h (u_h - v_h) stays small.  Lattice
    data is immune to that tilt (it is constant on each congruence class of
    y - z), so reproducing the fast-shift failure requires sampled data.
    """
    pair = bool(getattr(model, "pair", False))
    if not pair:
        raise ValueError("the shifting experiment needs a pair likelihood model")
    shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
    if shifts.shape != (schedule.horizon, 2):
        raise ValueError("shifts must provide one (u_h, v_h) pair per level")
    if direction is None:
        direction = np.zeros(model.dim)
        direction[0] = 1.0
    direction = np.asarray(direction, dtype=float)
    delta1 = schedule.deltas[0]
    rows = []
    for index in range(schedule.horizon):
        h = index + 1
        delta = schedule.deltas[index]
        beta = schedule.betas[index]
        lam_delta = float(schedule.lambda_deltas[index])
        params = ThermalizationParams(beta=beta, beta0=schedule.beta0)
        try:
            if data == "sample":
                n_h = int(np.ceil(samples0 * (delta1 / delta) ** sample_growth))
                mu = make_empirical(model, "sample", n=n_h, seed=[seed, h])
            elif data == "grid":
                half = _snap_half_width(box, delta)
                mu = make_empirical(
                    model,
                    "grid",
                    delta=delta,
                    box=(-half, half),
                    prune_nats=prune_nats,
                    thermal_beta=beta,
                    metric=metric,
                )
            else:
                raise ValueError(f"unknown data method: {data!r}")
            u_h, v_h = shifts[index]
            mu = mu.shifted(u_h * direction, v_h * direction)
            result = expect_random_loading(mu, qoi, params, metric)
            rows.append(_level_record(h, beta, delta, lam_delta, result, reference))
        except DegenerateThermalizationError:
            rows.append(_degenerate_record(h, beta, delta, lam_delta, reference))
    rows = tuple(rows)
    return ExperimentReport(label=label, schedule=schedule, rows=rows, verdict=_verdict(rows))


def qoi_displacement(truss: TrussModel, dof: int = 0) -> QuantityOfInterest:
    """Free-dof displacement recovered linearly from the strain block."""
    b = compatibility_matrix(truss)
    recover = np.linalg.pinv(b)
    offsets = np.asarray(truss.strain_offsets, dtype=float)
    members = b.shape[0]
    row = recover[dof]

    def fn(states):
        return (states[:, :members] - offsets) @ row

    return QuantityOfInterest(fn=fn, name=f"u[{dof}]")


def qoi_diagonal_moment(index: int, power: int = 2) -> QuantityOfInterest:
    """Moment of the diagonal coordinate xi = (y + z)/sqrt(2) of a pair."""

    def fn(y_rows, z_rows):
        xi = (y_rows[:, index] + z_rows[:, index]) / math.sqrt(2.0)
        return xi**power

    return QuantityOfInterest(fn=fn, pair=True, name=f"xi[{index}]^{power}")


def default_truss_schedule(horizon: int = 6, fast: bool = False) -> QuenchSchedule:
    """Truss-study ladder; ``fast`` swaps in the beta ~ delta^-4 failure mode."""
    return QuenchSchedule.geometric(
        beta0=0.25,
        delta1=1.6,
        ratio=0.5,
        exponent=4.0 if fast else 1.0,
        horizon=horizon,
    )


def default_sliding_schedule(horizon: int = 4) -> QuenchSchedule:
    return QuenchSchedule.geometric(
        beta0=1.0, delta1=1.6, ratio=0.5, exponent=1.0, horizon=horizon
    )


def truss_displacement_study(
    truss: TrussModel,
    schedule: QuenchSchedule = None,
    dof: int = 0,
    *,
    samples0: int = 10,
    sample_growth: float = 3.5,
    strain_halfwidth: float = 4.5,
    seed: int = 15,
    quadrature: LocalQuadrature = None,
    label: str = "truss-displacement",
) -> ExperimentReport:
    """Deterministic-loading study of one displacement dof on sampled graph data.

    Material states are sampled from the Gaussian ridge around the truss's
    member graphs (strain window wide enough to cover the restricted Gaussian
    on the constraint set), and level estimates are compared with the
    closed-form oracle displacement.

    On this Gaussian model the tempered mean of a linear observable has no
    systematic bias at any temperature, so level errors are pure sampling
    noise; the default growth makes the root-mean-square error halve per
    level, and the default seed realizes that typical decay.
    """
    if schedule is None:
        schedule = default_truss_schedule()
    oracle = gaussian_truss_oracle(truss)
    model = GaussianGraphLikelihood(
        moduli=truss.moduli,
        weights=truss.member_weights,
        strain_halfwidth=strain_halfwidth,
    )
    if quadrature is None:
        quadrature = LocalQuadrature(order=4)
    return run_convergence_study(
        model,
        schedule,
        qoi_displacement(truss, dof),
        float(oracle.mean_u[dof]),
        metric=truss_metric(truss),
        subspace=build_constraint_set(truss),
        data="sample",
        samples0=samples0,
        sample_growth=sample_growth,
        seed=seed,
        quadrature=quadrature,
        label=label,
    )


def sliding_moment_study(
    model: SlidingGaussianLikelihood,
    schedule: QuenchSchedule = None,
    component: int = 0,
    *,
    box: float = 8.0,
    seed: int = 0,
    prune_nats: float = DEFAULT_PRUNE_NATS,
    label: str = "sliding-moments",
) -> ExperimentReport:
    """Random-loading study of a diagonal second moment on pair-grid data.

    The reference is the closed-form covariance 2 Q^-1 of the diagonal limit
    density exp(-xi.Q.xi/4).  Raises :class:`NonTransversalError` for aligned
    factors, whose diagonal limit is not integrable.
    """
    reference_data = model.reference()
    if not reference_data.transversal:
        raise NonTransversalError(
            "aligned sliding factors (theta in pi Z) have no integrable diagonal limit"
        )
    if schedule is None:
        schedule = default_sliding_schedule()
    covariance = 2.0 * np.linalg.inv(reference_data.q_matrix)
    return run_convergence_study(
        model,
        schedule,
        qoi_diagonal_moment(component, 2),
        float(covariance[component, component]),
        metric=Metric.euclidean(model.dim),
        data="grid",
        box=box,
        seed=seed,
        prune_nats=prune_nats,
        label=label,
    )
