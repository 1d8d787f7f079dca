"""Command-line interface.

Subcommands: ``otoc run`` (OTOC campaign), ``otoc analyze`` (estimators on a
stored dataset), ``otoc entropy`` (Renyi campaign), ``otoc calibrate``
(Hamiltonian fit from quench data), ``otoc ramsey`` (dephasing-model
contrast).  Exit codes: 0 success, 2 configuration errors, 3 data errors,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisError,
    build_otoc_series,
    build_second_moment_table,
    calibrate_hamiltonian,
    convergence_study,
    fit_butterfly_velocity,
)
from .campaign import (
    run_entropy_campaign,
    run_otoc_campaign,
    write_otoc_series_csv,
)
from .config import (
    CampaignConfig,
    ConfigError,
    EntropyCampaignConfig,
    load_config,
    with_overrides,
)
from .dataset import DatasetError, MeasurementDataset, _config_header
from .noise import NoiseSpec, ramsey_contrast
from .protocol import EstimatorError
from .spin import TWO_PI
from .streams import derive_rng

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otoc",
        description="Randomized-measurement OTOC simulation lab",
        epilog="exit codes: 0 ok, 2 config error, 3 data error, 1 other",
    )
    parser.add_argument("--version", action="version", version=f"otoclab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an OTOC measurement campaign")
    p_run.add_argument("--config", required=True, help="campaign config JSON")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--output-dir", default=None, help="override the output directory")
    p_run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p_run.add_argument("--resume", action="store_true", help="resume a partial campaign")

    p_an = sub.add_parser("analyze", help="estimators on a stored dataset")
    p_an.add_argument("--dataset", required=True, help="directory holding dataset.csv")
    p_an.add_argument("--out", default=None, help="output directory (default: dataset dir)")
    p_an.add_argument("--orders", default=None, help="comma list of orders (default: config order)")
    p_an.add_argument("--convergence", action="store_true",
                      help="order-convergence table against the exact oracle")
    p_an.add_argument("--convergence-site", type=int, default=5)
    p_an.add_argument("--velocity", action="store_true", help="butterfly-velocity collapse fit")
    p_an.add_argument("--velocity-sites", default="2,3,4,5")
    p_an.add_argument("--threshold", type=float, default=0.5)
    p_an.add_argument("--second-moment", action="store_true",
                      help="site-averaged second moment of <W(t)>")

    p_en = sub.add_parser("entropy", help="run a Renyi-entropy campaign")
    p_en.add_argument("--config", required=True, help="entropy config JSON (kind=entropy)")
    p_en.add_argument("--seed", type=int, default=None)
    p_en.add_argument("--output-dir", default=None)
    p_en.add_argument("--workers", type=int, default=1)
    p_en.add_argument("--resume", action="store_true")

    p_cal = sub.add_parser("calibrate", help="fit (J0, alpha) from quench magnetization data")
    p_cal.add_argument("--observations", required=True,
                       help="CSV with header time_s,site,sz (long format)")
    p_cal.add_argument("--n-spins", type=int, required=True)
    p_cal.add_argument("--b-field-hz", type=float, required=True)
    p_cal.add_argument("--flip-site", type=int, default=5)
    p_cal.add_argument("--j0-guess-hz", type=float, required=True)
    p_cal.add_argument("--alpha-guess", type=float, required=True)
    p_cal.add_argument("--double-count-pairs", action="store_true")
    p_cal.add_argument("--max-evaluations", type=int, default=200)
    p_cal.add_argument("--out", default=None, help="write the fit as JSON here")

    p_ram = sub.add_parser("ramsey", help="dephasing-model Ramsey contrast")
    p_ram.add_argument("--white-std-hz", type=float, default=120.0)
    p_ram.add_argument("--dt-s", type=float, default=1e-4)
    p_ram.add_argument("--periodic-amplitude-hz", type=float, default=90.0)
    p_ram.add_argument("--periodic-frequency-hz", type=float, default=204.0)
    p_ram.add_argument("--t-max-s", type=float, default=0.042)
    p_ram.add_argument("--t-step-s", type=float, default=0.00025)
    p_ram.add_argument("--samples", type=int, default=20000)
    p_ram.add_argument("--seed", type=int, default=0)
    p_ram.add_argument("--out", default=None, help="write contrast curve CSV here")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if not isinstance(config, CampaignConfig):
        raise ConfigError("`otoc run` expects a config with kind 'otoc'")
    config = with_overrides(config, seed=args.seed, output_dir=args.output_dir)
    result = run_otoc_campaign(config, workers=args.workers, resume=args.resume)
    print(f"campaign complete: {result.dataset.n_unitaries} unitaries -> {result.output_dir}")
    return EXIT_OK


def _cmd_entropy(args) -> int:
    config = load_config(args.config)
    if not isinstance(config, EntropyCampaignConfig):
        raise ConfigError("`otoc entropy` expects a config with kind 'entropy'")
    config = with_overrides(config, seed=args.seed, output_dir=args.output_dir)
    result = run_entropy_campaign(config, workers=args.workers, resume=args.resume)
    for row in result.table:
        if row.partition == tuple(range(1, config.hamiltonian.n_spins + 1)):
            entropy = "n/a" if row.entropy is None else f"{row.entropy:.3f}"
            print(f"t={row.time * 1e3:g} ms: full-system S2 = {entropy}")
    print(f"entropy campaign complete -> {result.output_dir}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    data = MeasurementDataset.load(args.dataset)
    out = Path(args.out) if args.out else Path(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    config = data.config
    orders = (
        [int(x) for x in args.orders.split(",")] if args.orders else [config.order]
    )
    for order in orders:
        series = build_otoc_series(data, order)
        write_otoc_series_csv(out / f"otoc_series_n{order}.csv", config, series)
        print(f"order {order}: wrote otoc_series_n{order}.csv")
    if args.convergence:
        study = convergence_study(data, orders, args.convergence_site)
        lines = _config_header(config)
        lines.append("order,time_s,value,std_error,exact")
        for oi, order in enumerate(study.orders):
            for ti, t in enumerate(study.times):
                lines.append(
                    f"{order},{float(t)!r},{float(study.values[oi, ti])!r},"
                    f"{float(study.std_errors[oi, ti])!r},{float(study.exact[ti])!r}"
                )
        (out / "convergence.csv").write_text("\n".join(lines) + "\n")
        for oi, order in enumerate(study.orders):
            print(f"order {order}: max |O_n - O| = {study.max_abs_deviation[oi]:.4f}")
    if args.velocity:
        sites = [int(x) for x in args.velocity_sites.split(",")]
        series = build_otoc_series(data, config.order, sites=sites)
        fit = fit_butterfly_velocity(series, sites=sites, threshold=args.threshold)
        payload = {
            "v2_per_s": fit.v2,
            "delta_v2_per_s": fit.delta_v2,
            "threshold": fit.threshold,
            "method": fit.method,
            "v2_by_method": fit.v2_by_method,
            "crossing_times_s": {str(k): v for k, v in fit.crossing_times.items()},
            "residual_rms": fit.residual_rms,
            "excluded_sites": list(fit.excluded_sites),
            "unconstrained_fit": {
                "v2_per_s": fit.intercept_fit[0],
                "intercept_s": fit.intercept_fit[1],
            },
        }
        (out / "collapse_fit.json").write_text(json.dumps(payload, indent=1) + "\n")
        print(f"v2 = {fit.v2:.1f} /s (delta {fit.delta_v2:.1f}), residual {fit.residual_rms:.4f}")
    if args.second_moment:
        rows = build_second_moment_table(data)
        lines = _config_header(config)
        lines.append("time_s,value,std_error,raw_value")
        for r in rows:
            lines.append(
                f"{float(r.time)!r},{float(r.value)!r},"
                f"{float(r.std_error)!r},{float(r.raw_value)!r}"
            )
        (out / "second_moment.csv").write_text("\n".join(lines) + "\n")
        print("wrote second_moment.csv")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    times, observed = _read_observations(args.observations, args.n_spins)
    fit = calibrate_hamiltonian(
        times,
        observed,
        n_spins=args.n_spins,
        b_field=TWO_PI * args.b_field_hz,
        initial_j0=TWO_PI * args.j0_guess_hz,
        initial_alpha=args.alpha_guess,
        flip_site=args.flip_site,
        double_count_pairs=args.double_count_pairs,
        max_evaluations=args.max_evaluations,
    )
    payload = {
        "j0_hz": fit.j0 / TWO_PI,
        "alpha": fit.alpha,
        "residual_norm": fit.residual_norm,
        "n_evaluations": fit.n_evaluations,
        "covariance": None if fit.covariance is None else fit.covariance.tolist(),
    }
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _read_observations(path, n_spins: int):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read observations {path}: {exc}") from exc
    records = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("time_s"):
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise DatasetError(f"{path}:{line_no}: expected time_s,site,sz")
        t, site, sz = float(fields[0]), int(fields[1]), float(fields[2])
        records.setdefault(t, {})[site] = sz
    if not records:
        raise DatasetError(f"{path}: no observation rows")
    times = np.array(sorted(records), dtype=float)
    observed = np.empty((times.size, n_spins))
    for ti, t in enumerate(times):
        row = records[t]
        if sorted(row) != list(range(1, n_spins + 1)):
            raise DatasetError(f"{path}: time {t} does not cover sites 1..{n_spins}")
        observed[ti] = [row[j] for j in range(1, n_spins + 1)]
    return times, observed


def _cmd_ramsey(args) -> int:
    spec = NoiseSpec.from_hz(
        white_std_hz=args.white_std_hz,
        dt_s=args.dt_s,
        periodic_amplitude_hz=args.periodic_amplitude_hz,
        periodic_frequency_hz=args.periodic_frequency_hz,
    )
    times = np.arange(0.0, args.t_max_s + 0.5 * args.t_step_s, args.t_step_s)
    contrast = ramsey_contrast(spec, times, args.samples, derive_rng(args.seed, 7))
    revivals = [
        float(times[i])
        for i in range(1, times.size - 1)
        if contrast[i] > contrast[i - 1] and contrast[i] >= contrast[i + 1] and times[i] > 1e-3
    ]
    below = np.nonzero(contrast < 1.0 / np.e)[0]
    one_over_e = float(times[below[0]]) if below.size else None
    if args.out:
        lines = ["time_s,contrast"]
        lines += [f"{float(t)!r},{float(c)!r}" for t, c in zip(times, contrast)]
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"revival maxima (ms): {[round(t * 1e3, 2) for t in revivals[:4]]}")
    print(f"first 1/e crossing: {'none' if one_over_e is None else f'{one_over_e * 1e3:.1f} ms'}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "analyze": _cmd_analyze,
    "entropy": _cmd_entropy,
    "calibrate": _cmd_calibrate,
    "ramsey": _cmd_ramsey,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, EstimatorError, AnalysisError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
