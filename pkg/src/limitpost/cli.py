"""Experiment runner: reproduces the reference experiments end-to-end and
writes CSV artifacts (plus rendered figures) for every report.

Exit codes: 0 success, 2 configuration error, 3 data-load error, 4 numeric
fault, 5 conservative-criteria violation under ``--strict-criteria``.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, comonotony, criteria, tickdata
from .config import (
    CURVE_STREAM_BASE,
    SA_STREAM_BASE,
    ExperimentConfig,
    config_digest,
    config_to_text,
    load_config,
    preset,
    PRESET_NAMES,
)
from .cost import grid_argmin, mc_cost_curve
from .errors import (
    ConfigError,
    CriteriaViolation,
    DataLoadError,
    LimitpostError,
    NumericFault,
)
from .market import fit_intensity, read_calibration_csv
from .optimizer import replay_step_diagnostics, run_sa
from .paths import BrownianSource, EulerSource, ReplaySource
from .plotting import (
    render_calibration,
    render_cost_curve,
    render_covariances,
    render_trajectory,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CRITERIA = 5


def _write_manifest(config: ExperimentConfig, out_dir: Path, artifacts: list[Path]) -> Path:
    lines = [
        f"limitpost_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"scipy_version = {scipy.__version__}",
        f"config_sha256 = {config_digest(config)}",
        f"seed = {config.seed}",
        f"created_unix = {time.time():.3f}",
        "",
        "# resolved configuration",
        config_to_text(config).rstrip("\n"),
        "",
        "# artifacts",
    ]
    lines += [f"artifact = {p.name}" for p in artifacts]
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _simulated_source(config: ExperimentConfig, first_stream: int):
    if config.source_kind == "brownian":
        return BrownianSource(
            s0=config.s0,
            sigma=config.sigma,
            horizon=config.horizon,
            steps=config.steps,
            seed=config.seed,
            first_stream=first_stream,
        )
    if config.diffusion == "bachelier":
        spec = comonotony.bachelier(config.drift_rate, config.sigma)
    else:
        spec = comonotony.black_scholes(config.drift_rate, config.sigma)
    return EulerSource(
        spec,
        config.s0,
        config.horizon,
        config.steps,
        seed=config.seed,
        first_stream=first_stream,
    )


def _curve_source(config: ExperimentConfig):
    if config.source_kind in ("brownian", "euler"):
        return _simulated_source(config, CURVE_STREAM_BASE)
    cycles = tickdata.make_cycles(
        tickdata.load_ticks(config.tick_file),
        config.cycle_length,
        config.shift or None,
    )
    return ReplaySource(cycles)


def _sa_source(config: ExperimentConfig):
    if config.source_kind in ("brownian", "euler"):
        return _simulated_source(config, SA_STREAM_BASE)
    return _curve_source(config)


def _criteria_gate(config: ExperimentConfig, out_dir: Path, strict: bool) -> list[Path]:
    """Evaluate the conservative criteria, write the report, warn or fail."""
    report = criteria.build_report(config.setup(), config.model(), config.penalty())
    path = out_dir / "criteria.txt"
    path.write_text(criteria.render_report(report))
    failed = [key for key in ("structural", "kappa_origin", "kappa_global", "kappa_convexity")
              if not report.verdicts[key]]
    if failed:
        print(f"warning: conservative criteria failed: {', '.join(failed)} (see criteria.txt)")
        if strict:
            raise CriteriaViolation(f"conservative criteria failed: {', '.join(failed)}")
    return [path]


def _write_summary(out_dir: Path, entries: dict) -> Path:
    path = out_dir / "summary.txt"
    with path.open("w") as handle:
        for key, value in entries.items():
            if isinstance(value, float):
                handle.write(f"{key} = {value:.17g}\n")
            else:
                handle.write(f"{key} = {value}\n")
    return path


def _mode_cost_curve(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    setup, model, penalty = config.setup(), config.model(), config.penalty()
    source = _curve_source(config)
    n_paths = config.n_paths if config.source_kind != "replay" else len(source)
    curve = mc_cost_curve(
        setup, model, penalty, config.delta_grid(), source, n_paths, threads=config.threads
    )
    delta_star, c_min = grid_argmin(curve)
    curve_path = out_dir / "cost_curve.csv"
    curve.write_csv(curve_path)
    artifacts = [curve_path, _write_summary(
        out_dir, {"delta_star": delta_star, "c_min": c_min, "n_paths": n_paths}
    )]
    if config.plots:
        artifacts.append(render_cost_curve(curve, out_dir / "cost_curve.png", delta_star))
    return artifacts


def _mode_run_sa(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    setup, model, penalty = config.setup(), config.model(), config.penalty()
    trajectory = run_sa(
        setup,
        model,
        penalty,
        config.schedule(),
        config.n_steps,
        _sa_source(config),
        delta0=None if config.delta0 < 0 else config.delta0,
    )
    traj_path = out_dir / "trajectory.csv"
    trajectory.write_csv(traj_path)
    artifacts = [traj_path]
    summary = {
        "final_iterate": trajectory.final,
        "final_averaged": trajectory.final_averaged,
        "n_steps": trajectory.n_steps,
        "projection_steps": int(trajectory.projection_active.sum()),
    }
    target = None
    if config.reference_curve:
        source = _curve_source(config)
        n_paths = config.n_paths if config.source_kind != "replay" else len(source)
        curve = mc_cost_curve(
            setup, model, penalty, config.delta_grid(), source, n_paths, threads=config.threads
        )
        target, c_min = grid_argmin(curve)
        curve_path = out_dir / "cost_curve.csv"
        curve.write_csv(curve_path)
        artifacts.append(curve_path)
        summary.update(
            {
                "delta_star": target,
                "c_min": c_min,
                "gap_final_averaged": abs(trajectory.final_averaged - target),
            }
        )
        if config.plots:
            artifacts.append(render_cost_curve(curve, out_dir / "cost_curve.png", target))
    artifacts.append(_write_summary(out_dir, summary))
    if config.plots:
        artifacts.append(render_trajectory(trajectory, out_dir / "trajectory.png", target))
    return artifacts


def _mode_replay_sa(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    series = tickdata.load_ticks(config.tick_file)
    cycles = tickdata.make_cycles(series, config.cycle_length, config.shift or None)
    source = ReplaySource(cycles)
    setup, model, penalty = config.setup(), config.model(), config.penalty()
    n_steps = min(config.n_steps, len(cycles))
    trajectory = run_sa(
        setup,
        model,
        penalty,
        config.schedule(),
        n_steps,
        source,
        delta0=None if config.delta0 < 0 else config.delta0,
    )
    curve = mc_cost_curve(
        setup, model, penalty, config.delta_grid(), source, len(cycles), threads=config.threads
    )
    delta_star, c_min = grid_argmin(curve)
    cycles_path = out_dir / "cycles.csv"
    tickdata.export_cycles_csv(cycles, cycles_path)
    traj_path = out_dir / "trajectory.csv"
    trajectory.write_csv(traj_path)
    curve_path = out_dir / "cost_curve.csv"
    curve.write_csv(curve_path)
    diag = replay_step_diagnostics(
        cycles, config.schedule(), upper=float(np.max(series.bids)), seed=config.seed
    )
    summary = {
        "n_cycles": len(cycles),
        "n_steps": n_steps,
        "final_iterate": trajectory.final,
        "final_averaged": trajectory.final_averaged,
        "delta_star": delta_star,
        "c_min": c_min,
        "gap_final_averaged": abs(trajectory.final_averaged - delta_star),
    }
    for n, dstar, term in diag:
        summary[f"discrepancy_bound_n{n}"] = dstar
        summary[f"step_condition_term_n{n}"] = term
    artifacts = [cycles_path, traj_path, curve_path, _write_summary(out_dir, summary)]
    if config.plots:
        artifacts.append(render_cost_curve(curve, out_dir / "cost_curve.png", delta_star))
        artifacts.append(render_trajectory(trajectory, out_dir / "trajectory.png", delta_star))
    return artifacts


def _mode_calibrate(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    points = read_calibration_csv(config.calibration_file)
    try:
        model = fit_intensity(points)
    except ValueError as exc:
        raise DataLoadError(str(exc)) from exc
    report_path = out_dir / "calibration.txt"
    report_path.write_text(
        f"n_points = {len(points)}\n"
        f"base_rate = {model.base_rate:.17g}\n"
        f"decay = {model.decay:.17g}\n"
    )
    artifacts = [report_path]
    if config.plots:
        artifacts.append(render_calibration(points, model, out_dir / "calibration.png"))
    return artifacts


def _mode_check_criteria(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    setup, model, penalty = config.setup(), config.model(), config.penalty()
    source = None
    n_paths = 0
    if config.sharp:
        source = _curve_source(config)
        n_paths = config.n_paths if config.source_kind != "replay" else len(source)
    report = criteria.build_report(
        setup,
        model,
        penalty,
        source=source,
        n_paths=n_paths,
        delta_grid=config.delta_grid() if config.sharp else None,
        threads=config.threads,
    )
    path = out_dir / "criteria.txt"
    path.write_text(criteria.render_report(report))
    return [path]


def _comonotony_battery(config: ExperimentConfig):
    """Shipped diffusion / functional pairs, plus the anti-monotone control."""
    theta = 0.2
    diffusions = [
        ("bachelier", comonotony.bachelier(0.5, 2.0), 100.0),
        ("black-scholes", comonotony.black_scholes(0.05, theta), 100.0),
        (
            "hull-white",
            comonotony.hull_white(0.05, lambda t: 0.15 + 0.1 * math.sin(t)),
            100.0,
        ),
        ("bounded-local-vol", comonotony.bounded_local_vol(0.05, 0.25, 0.1, 50.0), 100.0),
    ]
    pairs = [
        (comonotony.terminal_value(), comonotony.running_max()),
        (comonotony.path_mean(), comonotony.terminal_value()),
        (comonotony.running_min(), comonotony.running_max()),
    ]
    rows = []
    for name, spec, x0 in diffusions:
        source = EulerSource(spec, x0, config.horizon, config.steps, config.seed)
        for f, g in pairs:
            estimate = comonotony.estimate_covariance(f, g, source, config.n_paths)
            rows.append((f"{name}:{f.name}*{g.name}", estimate))
    control_source = BrownianSource(
        config.s0, max(config.sigma, 0.01), config.horizon, config.steps, config.seed
    )
    control = comonotony.estimate_covariance(
        comonotony.terminal_value(),
        comonotony.negated(comonotony.terminal_value()),
        control_source,
        config.n_paths,
    )
    rows.append(("control:terminal*-terminal", control))
    return rows


def _mode_comonotony(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    rows = _comonotony_battery(config)
    csv_path = out_dir / "comonotony.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pair", "covariance", "se", "z", "n_paths", "verdict"])
        for label, est in rows:
            anti = label.startswith("control:")
            ok = est.z_score <= -3.0 if anti else est.z_score >= -3.0
            writer.writerow(
                [
                    label,
                    f"{est.covariance:.17g}",
                    f"{est.standard_error:.17g}",
                    f"{est.z_score:.6g}",
                    est.n_paths,
                    "PASS" if ok else "FAIL",
                ]
            )
    artifacts = [csv_path]
    if config.plots:
        artifacts.append(
            render_covariances(
                [(label, est.covariance, est.standard_error) for label, est in rows],
                out_dir / "comonotony.png",
            )
        )
    return artifacts


_MODE_RUNNERS = {
    "cost-curve": _mode_cost_curve,
    "run-sa": _mode_run_sa,
    "replay-sa": _mode_replay_sa,
    "calibrate": _mode_calibrate,
    "check-criteria": _mode_check_criteria,
    "comonotony-test": _mode_comonotony,
}


def run_experiment(
    config: ExperimentConfig, dry_run: bool = False, strict_criteria: bool = False
) -> list[Path]:
    """Validate, execute one experiment mode, and write its artifacts."""
    config.validate()
    if dry_run:
        print(config_to_text(config), end="")
        print(f"# config_sha256 = {config_digest(config)}")
        return []
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    if config.mode in ("cost-curve", "run-sa", "replay-sa"):
        artifacts += _criteria_gate(config, out_dir, strict_criteria)
    artifacts += _MODE_RUNNERS[config.mode](config, out_dir)
    artifacts.append(_write_manifest(config, out_dir, artifacts))
    for artifact in artifacts:
        print(f"wrote {artifact}")
    return artifacts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="limitpost",
        description="Optimal limit-order posting distance experiments",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODE_RUNNERS:
        p = sub.add_parser(mode, help=f"run a {mode} experiment")
        p.add_argument("--config", type=Path, help="flat 'section.key = value' config file")
        p.add_argument("--preset", choices=PRESET_NAMES, help="named parameter preset")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", type=Path, help="override output.dir")
        p.add_argument("--threads", type=int, help="override run.threads")
        p.add_argument("--tick-file", type=Path, help="override source.tick_file")
        p.add_argument(
            "--points-csv", type=Path, help="override source.calibration_file (calibrate)"
        )
        p.add_argument("--n-paths", type=int, help="override run.n_paths")
        p.add_argument("--dry-run", action="store_true", help="validate and print, write nothing")
        p.add_argument(
            "--strict-criteria",
            action="store_true",
            help="turn conservative-criteria warnings into exit code 5",
        )
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = preset(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        config = load_config(args.config, base=config)
    config.mode = args.mode
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = str(args.out)
    if args.threads is not None:
        config.threads = args.threads
    if args.tick_file is not None:
        config.tick_file = str(args.tick_file)
    if args.points_csv is not None:
        config.calibration_file = str(args.points_csv)
    if args.n_paths is not None:
        config.n_paths = args.n_paths
    if args.no_plots:
        config.plots = False
    return config


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        run_experiment(config, dry_run=args.dry_run, strict_criteria=args.strict_criteria)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataLoadError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CriteriaViolation as exc:
        print(f"criteria violation: {exc}", file=sys.stderr)
        return EXIT_CRITERIA
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LimitpostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
