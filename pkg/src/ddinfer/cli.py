"""Command-line interface.

Subcommands cover the operational surface of the library: solving the
deterministic closest-point problem, thermalized inference on datasets,
closed-form truss oracles, convergence studies along quenching schedules,
relative entropy between datasets, and schedule validation.

Exit codes: 0 on success, 1 on domain errors (degenerate thermalization,
invalid schedule, non-transversal model, malformed data), 2 on usage errors.
All outputs are deterministic: reports embed the fully resolved configuration
and seed, and re-running from an embedded configuration reproduces every
output file byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    config_float,
    config_int,
    config_str,
    format_config,
    parse_config_file,
    schedule_from_config,
    truss_from_config,
    truss_to_config,
)
from .datasets import DatasetFile, format_float, parse_dataset
from .geometry import Metric
from .harness import (
    NonTransversalError,
    QuenchSchedule,
    qoi_diagonal_moment,
    qoi_displacement,
    schedule_validate,
    shifting_error_experiment,
    sliding_moment_study,
    truss_displacement_study,
)
from .inference import (
    LocalQuadrature,
    expect_det_loading,
    expect_random_loading,
    qoi_coordinate,
)
from .measures import (
    DegenerateThermalizationError,
    SlidingGaussianLikelihood,
    ThermalizationParams,
    kl_divergence,
    thermalize_discrete,
)
from .solver import dd_solve_exact
from .truss import (
    UnequilibrableLoadError,
    build_constraint_set,
    gaussian_truss_oracle,
    truss_metric,
)

__all__ = ["main", "build_parser"]

_DOMAIN_ERRORS = (
    ValueError,
    OSError,
    DegenerateThermalizationError,
    UnequilibrableLoadError,
    NonTransversalError,
    np.linalg.LinAlgError,
)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _emit(args, name: str, text: str) -> None:
    if getattr(args, "out", None):
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


def _print_report(args, payload) -> None:
    text = _json_text(payload)
    sys.stdout.write(text)
    _emit(args, "report.json", text)


def _echo_dataset(args, name: str, path) -> None:
    """Copy an input dataset into the output directory in canonical form."""
    if getattr(args, "out", None):
        _emit(args, name, DatasetFile.read(path).to_text())


def _load_truss(path):
    return truss_from_config(parse_config_file(path), prefix="truss.")


def _resolve_qoi(request: str, truss):
    kind, _, argument = request.partition(":")
    index = int(argument) if argument else 0
    if kind == "coordinate":
        return qoi_coordinate(index)
    if kind == "material":
        return qoi_coordinate(index, source="material")
    if kind == "pair-mean":
        return qoi_coordinate(index, source="pair_mean")
    if kind == "displacement":
        if truss is None:
            raise ValueError("displacement observables need --truss")
        return qoi_displacement(truss, index)
    raise ValueError(f"unknown quantity of interest {request!r}")


def _result_payload(result) -> dict:
    return {
        "expectation": float(result.expectation),
        "total_variation": float(result.total_variation),
        "effective_sample_size": float(result.effective_sample_size),
        "degenerate": bool(result.degenerate),
        "beta": float(result.beta),
    }


# ----------------------------------------------------------------- subcommands


def _cmd_validate_schedule(args) -> int:
    if args.config:
        schedule = schedule_from_config(parse_config_file(args.config))
    else:
        schedule = QuenchSchedule.geometric(
            beta0=args.beta0,
            delta1=args.delta1,
            ratio=args.ratio,
            exponent=args.exponent,
            horizon=args.horizon,
        )
    valid, limit = schedule_validate(schedule)
    payload = {
        "valid": bool(valid),
        "limit_estimate": float(limit),
        "lambda_delta": [float(x) for x in schedule.lambda_deltas],
        "beta": [float(b) for b in schedule.betas],
        "delta": [float(d) for d in schedule.deltas],
    }
    _print_report(args, payload)
    if not valid:
        print("quench too fast", file=sys.stderr)
        return 1
    return 0


def _cmd_oracle(args) -> int:
    truss = _load_truss(args.file)
    oracle = gaussian_truss_oracle(truss)
    payload = {
        "mean_u": [float(v) for v in oracle.mean_u],
        "mean_v": [float(v) for v in oracle.mean_v],
        "stiffness": [[float(v) for v in row] for row in np.atleast_2d(oracle.stiffness)],
        "compliance": [[float(v) for v in row] for row in np.atleast_2d(oracle.compliance)],
        "normalization": float(oracle.normalization),
        "likelihood_integral_uv": float(oracle.likelihood_integral_uv),
        "likelihood_mass": float(oracle.likelihood_mass),
    }
    _print_report(args, payload)
    return 0


def _cmd_dd_solve(args) -> int:
    truss = _load_truss(args.truss)
    subspace = build_constraint_set(truss)
    metric = truss_metric(truss)
    measure = parse_dataset(args.data, expected_dim=metric.dim)
    _echo_dataset(args, "data.csv", args.data)
    solution = dd_solve_exact(measure.points, subspace, metric)
    payload = {
        "material_state": [float(v) for v in solution.y_star.values],
        "admissible_state": [float(v) for v in solution.z_star.values],
        "distance": float(solution.distance),
        "index": int(solution.index),
    }
    _print_report(args, payload)
    return 0


def _cmd_infer(args) -> int:
    truss = _load_truss(args.truss) if args.truss else None
    measure = parse_dataset(args.data)
    _echo_dataset(args, "data.csv", args.data)
    if truss is not None:
        metric = truss_metric(truss)
        if measure.dim != metric.dim:
            raise ValueError(
                f"column mismatch: dataset carries {measure.dim} coordinates, "
                f"truss phase space has {metric.dim}"
            )
    else:
        metric = Metric.euclidean(measure.dim)
    params = ThermalizationParams(beta=args.beta, beta0=args.beta0)
    qoi = _resolve_qoi(args.qoi, truss)
    if args.mode == "deterministic":
        if truss is None:
            raise ValueError("deterministic mode needs --truss for the constraint set")
        if qoi.pair:
            raise ValueError("deterministic mode needs a state observable")
        if measure.pair_points is not None:
            raise ValueError("deterministic mode reads material-only datasets")
        subspace = build_constraint_set(truss)
        result = expect_det_loading(
            measure,
            subspace,
            qoi,
            params,
            metric,
            LocalQuadrature(order=args.quadrature_order),
        )
    else:
        if measure.pair_points is None:
            raise ValueError("random mode reads paired datasets")
        result = expect_random_loading(measure, qoi, params, metric)
    _print_report(args, _result_payload(result))
    if result.degenerate:
        print("degenerate thermalization: effective sample size too low", file=sys.stderr)
        return 1
    return 0


def _cmd_kl(args) -> int:
    nu = parse_dataset(args.data)
    mu = parse_dataset(args.reference)
    _echo_dataset(args, "data.csv", args.data)
    _echo_dataset(args, "reference.csv", args.reference)
    if args.beta is not None:
        truss = _load_truss(args.truss) if args.truss else None
        metric = truss_metric(truss) if truss else Metric.euclidean(mu.dim)
        params = ThermalizationParams(beta=args.beta, beta0=args.beta0)
        mu = thermalize_discrete(mu, params, metric)
    value = kl_divergence(nu, mu)
    payload = {"kl_divergence": float(value)}
    if args.beta is not None:
        payload["beta"] = float(args.beta)
    _print_report(args, payload)
    return 0


# ---------------------------------------------------------------------- study


def _resolved_seed(args, mapping: dict, default: int) -> int:
    env = os.environ.get("DDINFER_SEED")
    if env is not None:
        return int(env)
    if args.seed is not None:
        return int(args.seed)
    return config_int(mapping, "study.seed", default)


def _schedule_keys(mapping: dict, defaults: dict) -> dict:
    resolved = {}
    for name, fallback in defaults.items():
        key = f"schedule.{name}"
        if name == "horizon":
            resolved[key] = str(config_int(mapping, key, fallback))
        else:
            resolved[key] = format_float(config_float(mapping, key, fallback))
    return resolved


def _sliding_model_keys(mapping: dict) -> dict:
    """Resolve sliding.* keys to canonical strings, filling defaults.

    When neither an angle nor explicit admissible-side coefficients are
    configured, the crossing geometry theta = pi/2 is used.
    """
    resolved = {
        "sliding.a1": format_float(config_float(mapping, "sliding.a1", 1.0)),
        "sliding.a2": format_float(config_float(mapping, "sliding.a2", 0.0)),
        "sliding.half_dim": str(config_int(mapping, "sliding.half_dim", 1)),
    }
    for key in ("sliding.theta", "sliding.b1", "sliding.b2"):
        if key in mapping:
            resolved[key] = format_float(config_float(mapping, key))
    if "sliding.theta" not in resolved and "sliding.b1" not in resolved:
        resolved["sliding.theta"] = format_float(np.pi / 2.0)
    return resolved


def _sliding_model(resolved: dict) -> SlidingGaussianLikelihood:
    theta = (
        config_float(resolved, "sliding.theta")
        if "sliding.theta" in resolved
        else None
    )
    b1 = config_float(resolved, "sliding.b1") if "sliding.b1" in resolved else None
    b2 = config_float(resolved, "sliding.b2") if "sliding.b2" in resolved else None
    return SlidingGaussianLikelihood(
        a1=config_float(resolved, "sliding.a1", 1.0),
        a2=config_float(resolved, "sliding.a2", 0.0),
        theta=theta,
        b1=b1,
        b2=b2,
        half_dim=config_int(resolved, "sliding.half_dim", 1),
    )


def _study_converge(mapping: dict, seed: int):
    truss = truss_from_config(mapping, prefix="truss.")
    schedule_defaults = {
        "beta0": 0.25,
        "delta1": 1.6,
        "ratio": 0.5,
        "exponent": 1.0,
        "horizon": 6,
    }
    resolved = dict(truss_to_config(truss))
    resolved.update(_schedule_keys(mapping, schedule_defaults))
    schedule = schedule_from_config(resolved)
    dof = config_int(mapping, "study.dof", 0)
    samples0 = config_int(mapping, "study.samples0", 10)
    growth = config_float(mapping, "study.growth", 3.5)
    halfwidth = config_float(mapping, "study.strain_halfwidth", 4.5)
    order = config_int(mapping, "study.quadrature_order", 4)
    label = config_str(mapping, "study.label", "truss-displacement")
    resolved.update(
        {
            "study.kind": "converge",
            "study.dof": str(dof),
            "study.samples0": str(samples0),
            "study.growth": format_float(growth),
            "study.strain_halfwidth": format_float(halfwidth),
            "study.quadrature_order": str(order),
            "study.label": label,
            "study.seed": str(seed),
        }
    )
    report = truss_displacement_study(
        truss,
        schedule,
        dof,
        samples0=samples0,
        sample_growth=growth,
        strain_halfwidth=halfwidth,
        seed=seed,
        quadrature=LocalQuadrature(order=order),
        label=label,
    )
    return report, resolved


def _study_sliding(mapping: dict, seed: int):
    schedule_defaults = {
        "beta0": 1.0,
        "delta1": 1.6,
        "ratio": 0.5,
        "exponent": 1.0,
        "horizon": 4,
    }
    resolved = _sliding_model_keys(mapping)
    resolved.update(_schedule_keys(mapping, schedule_defaults))
    model = _sliding_model(resolved)
    schedule = schedule_from_config(resolved)
    component = config_int(mapping, "study.component", 0)
    box = config_float(mapping, "study.box", 8.0)
    prune = config_float(mapping, "study.prune_nats", 46.0)
    label = config_str(mapping, "study.label", "sliding-moments")
    resolved.update(
        {
            "study.kind": "sliding",
            "study.component": str(component),
            "study.box": format_float(box),
            "study.prune_nats": format_float(prune),
            "study.label": label,
            "study.seed": str(seed),
        }
    )
    report = sliding_moment_study(
        model,
        schedule,
        component,
        box=box,
        seed=seed,
        prune_nats=prune,
        label=label,
    )
    return report, resolved


def _study_shifting(mapping: dict, seed: int):
    schedule_defaults = {
        "beta0": 1.0,
        "delta1": 1.6,
        "ratio": 0.5,
        "exponent": 1.0,
        "horizon": 4,
    }
    resolved = _sliding_model_keys(mapping)
    resolved.update(_schedule_keys(mapping, schedule_defaults))
    model = _sliding_model(resolved)
    reference_data = model.reference()
    if not reference_data.transversal:
        raise NonTransversalError(
            "aligned sliding factors (theta in pi Z) have no integrable diagonal limit"
        )
    schedule = schedule_from_config(resolved)
    u0 = config_float(mapping, "shifting.u0", 0.5)
    v0 = config_float(mapping, "shifting.v0", 0.5)
    rate = config_float(mapping, "shifting.rate", 0.5)
    data = config_str(mapping, "study.data", "grid")
    box = config_float(mapping, "study.box", 8.0)
    samples0 = config_int(mapping, "study.samples0", 1000)
    growth = config_float(mapping, "study.growth", 1.5)
    component = config_int(mapping, "study.component", 0)
    label = config_str(mapping, "study.label", "shifting")
    resolved.update(
        {
            "study.kind": "shifting",
            "shifting.u0": format_float(u0),
            "shifting.v0": format_float(v0),
            "shifting.rate": format_float(rate),
            "study.data": data,
            "study.box": format_float(box),
            "study.samples0": str(samples0),
            "study.growth": format_float(growth),
            "study.component": str(component),
            "study.label": label,
            "study.seed": str(seed),
        }
    )
    steps = rate ** np.arange(schedule.horizon)
    shifts = np.stack([u0 * steps, v0 * steps], axis=1)
    covariance = 2.0 * np.linalg.inv(reference_data.q_matrix)
    report = shifting_error_experiment(
        model,
        shifts,
        schedule,
        qoi_diagonal_moment(component, 2),
        float(covariance[component, component]),
        metric=Metric.euclidean(model.dim),
        data=data,
        box=box,
        samples0=samples0,
        sample_growth=growth,
        seed=seed,
        label=label,
    )
    return report, resolved


_STUDY_KINDS = {
    "converge": (_study_converge, 15),
    "sliding": (_study_sliding, 0),
    "shifting": (_study_shifting, 0),
}


def _cmd_study(args) -> int:
    runner, default_seed = _STUDY_KINDS[args.kind]
    mapping = parse_config_file(args.config) if args.config else {}
    seed = _resolved_seed(args, mapping, default_seed)
    report, resolved = runner(mapping, seed)
    payload = {
        "label": report.label,
        "kind": args.kind,
        "config": resolved,
        "seed": seed,
        "summary": {
            key: (float(value) if isinstance(value, (int, float)) and key != "levels" else value)
            for key, value in report.summary().items()
        },
        "levels": [
            {
                "h": row.h,
                "beta": float(row.beta),
                "delta": float(row.delta),
                "lambda_delta": float(row.lambda_delta),
                "expectation": float(row.expectation),
                "reference": float(row.reference),
                "abs_err": float(row.abs_err),
                "rel_err": float(row.rel_err),
                "ess": float(row.ess),
                "tv": float(row.tv),
                "degenerate": bool(row.degenerate),
            }
            for row in report.rows
        ],
    }
    _print_report(args, payload)
    _emit(args, "levels.csv", report.to_csv())
    _emit(args, "config.cfg", format_config(resolved))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddinfer",
        description="Model-free inference on empirical material data.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser(
        "dd-solve", help="closest material/admissible pair for a truss dataset"
    )
    solve.add_argument("--truss", required=True, help="truss configuration file")
    solve.add_argument("--data", required=True, help="material dataset CSV")
    solve.add_argument("--out", help="directory for report.json")
    solve.set_defaults(handler=_cmd_dd_solve)

    infer = commands.add_parser("infer", help="thermalized expectation on a dataset")
    infer.add_argument("--mode", choices=("deterministic", "random"), required=True)
    infer.add_argument("--data", required=True, help="dataset CSV")
    infer.add_argument("--beta", type=float, required=True, help="inverse temperature")
    infer.add_argument("--beta0", type=float, default=1.0, help="reference beta")
    infer.add_argument("--truss", help="truss configuration file")
    infer.add_argument(
        "--qoi",
        default="coordinate:0",
        help="observable: coordinate:I, material:I, pair-mean:I, displacement:D",
    )
    infer.add_argument("--quadrature-order", type=int, default=8)
    infer.add_argument("--out", help="directory for report.json")
    infer.set_defaults(handler=_cmd_infer)

    oracle = commands.add_parser("oracle", help="closed-form reference solutions")
    oracle.add_argument("target", choices=("truss",))
    oracle.add_argument("--file", required=True, help="truss configuration file")
    oracle.add_argument("--out", help="directory for report.json")
    oracle.set_defaults(handler=_cmd_oracle)

    study = commands.add_parser("study", help="convergence studies along a schedule")
    study.add_argument("kind", choices=tuple(_STUDY_KINDS))
    study.add_argument("--config", help="flat key/value configuration file")
    study.add_argument("--out", help="directory for report.json and levels.csv")
    study.add_argument("--seed", type=int, help="override the configured seed")
    study.set_defaults(handler=_cmd_study)

    kl = commands.add_parser("kl", help="relative entropy between datasets")
    kl.add_argument("--data", required=True, help="candidate dataset CSV")
    kl.add_argument("--reference", required=True, help="reference dataset CSV")
    kl.add_argument("--beta", type=float, help="thermalize the reference first")
    kl.add_argument("--beta0", type=float, default=1.0)
    kl.add_argument("--truss", help="truss file fixing the metric")
    kl.add_argument("--out", help="directory for report.json")
    kl.set_defaults(handler=_cmd_kl)

    validate = commands.add_parser(
        "validate-schedule", help="check that a quenching schedule is slow enough"
    )
    validate.add_argument("--config", help="configuration with schedule.* keys")
    validate.add_argument("--beta0", type=float, default=1.0)
    validate.add_argument("--delta1", type=float, default=1.6)
    validate.add_argument("--ratio", type=float, default=0.5)
    validate.add_argument("--exponent", type=float, default=1.0)
    validate.add_argument("--horizon", type=int, default=6)
    validate.add_argument("--out", help="directory for report.json")
    validate.set_defaults(handler=_cmd_validate_schedule)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
