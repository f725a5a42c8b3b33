"""Configuration-driven experiment runner and command line interface.

Commands: ``run <config>``, ``sweep <config> --axis <name> --values a,b,c``
and ``plot <results dir>``.  Outputs are deterministic CSV tables plus a
JSON-lines manifest with content hashes; identical config and seed give
byte-identical CSVs regardless of worker count, because parallelism is
over estimator tasks and sweep cells, never inside one estimator.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import (
    EstimatorSpec,
    ExperimentConfig,
    build_potential,
    dumps_config,
    load_config,
    loads_config,
)
from .errors import BlowUpError, ConfigError, FluctchainError, NumericError
from .estimators import (
    bg2_discrepancy,
    equipartition_stat,
    martingale_cross_covariance,
    qv_estimate,
    spacetime_correlation,
    wrong_frame_integral,
)
from .observables import Frame, TestFunction

log = logging.getLogger("fluctchain")

CSV_COLUMNS = ("estimator", "n", "ell", "sigma", "t", "value", "stderr", "replicas", "seed")

SWEEP_AXES = ("n", "ell", "b_exp", "a_exp")


# ---------------------------------------------------------------------------
# Estimator dispatch
# ---------------------------------------------------------------------------


def _profile(params: dict) -> TestFunction:
    kind = params.get("phi", "gaussian")
    if kind == "gaussian":
        return TestFunction(
            "gaussian",
            center=params.get("phi_center", 0.0),
            width=params.get("phi_width", 1.0),
        )
    if kind == "hermite":
        return TestFunction(
            "hermite",
            index=params.get("phi_index", 0),
            scale=params.get("phi_scale", 1.0),
            center=params.get("phi_center", 0.0),
        )
    raise ConfigError(f"unknown test function kind {kind!r}")


def _row(cfg, est_name, *, ell="", sigma="", t="", value, stderr, replicas):
    return {
        "estimator": est_name,
        "n": cfg.scaling.n,
        "ell": ell,
        "sigma": sigma,
        "t": t,
        "value": value,
        "stderr": stderr,
        "replicas": replicas,
        "seed": cfg.seed,
    }


def estimator_rows(cfg: ExperimentConfig, est: EstimatorSpec) -> list:
    """Run one configured estimator and return its CSV rows."""
    pot = build_potential(cfg)
    sc = cfg.scaling
    p = est.params
    sigma = int(p.get("sigma", 1))
    t_final = float(p.get("t_final", 0.1))
    dt_snap = p.get("dt_snap")
    common = dict(replicas=cfg.replicas, seed=cfg.seed)

    if est.kind == "qv":
        phi = _profile(p)
        frame = Frame.for_mode(sigma, sc, pot)
        r = qv_estimate(sc, pot, phi, frame, t_final, cfg.replicas, cfg.seed, dt_snap=dt_snap)
        return [_row(cfg, est.name, sigma=sigma, t=t_final,
                     value=r.value, stderr=r.stderr, replicas=r.replicas)]

    if est.kind == "equipartition":
        phi = _profile(p)
        frame = Frame.for_mode(sigma, sc, pot)
        r = equipartition_stat(sc, pot, phi, frame, t_final, cfg.replicas, cfg.seed, dt_snap=dt_snap)
        return [_row(cfg, est.name, sigma=sigma, t=t_final,
                     value=r.value, stderr=r.stderr, replicas=r.replicas)]

    if est.kind == "bg2":
        phi = _profile(p)
        frame = Frame.for_mode(sigma, sc, pot)
        ells = [int(e) for e in p.get("ells", [1])]
        out = bg2_discrepancy(sc, pot, ells, phi, frame, t_final, cfg.replicas, cfg.seed, dt_snap=dt_snap)
        return [
            _row(cfg, est.name, ell=e, sigma=sigma, t=t_final,
                 value=out[e].value, stderr=out[e].stderr, replicas=out[e].replicas)
            for e in ells
        ]

    if est.kind == "wrong_frame":
        phi = _profile(p)
        variant = p.get("variant", "linear")
        if "wrong_velocity" in p:
            v = float(p["wrong_velocity"])
        else:
            v = Frame.for_mode(int(p.get("wrong_sigma", -sigma)), sc, pot).velocity
        r = wrong_frame_integral(sc, pot, sigma, v, phi, t_final, cfg.replicas,
                                 cfg.seed, kind=variant, dt_snap=dt_snap)
        return [_row(cfg, est.name, sigma=sigma, t=t_final,
                     value=r.value, stderr=r.stderr, replicas=r.replicas)]

    if est.kind == "bracket":
        phi_p = _profile(p)
        center_m = p.get("phi_minus_center", p.get("phi_center", 0.0))
        phi_m = TestFunction("gaussian", center=center_m, width=p.get("phi_width", 1.0))
        which = p.get("which", "cross")
        r = martingale_cross_covariance(sc, pot, phi_p, phi_m, t_final, cfg.replicas,
                                        cfg.seed, which=which, dt_snap=dt_snap)
        return [_row(cfg, est.name, sigma=sigma, t=t_final,
                     value=r.value, stderr=r.stderr, replicas=r.replicas)]

    if est.kind == "correlation":
        lags = [int(v) for v in p.get("lags", [0])]
        times = [float(v) for v in p.get("times", [0.0])]
        out = spacetime_correlation(sc, pot, sigma, lags, times, cfg.replicas, cfg.seed)
        rows = []
        for t in sorted(out):
            series = out[t]
            for lag, mean, err in zip(series.grid, series.mean, series.stderr):
                rows.append(_row(cfg, est.name, ell=int(lag), sigma=sigma, t=t,
                                 value=float(mean), stderr=float(err),
                                 replicas=series.replicas))
        return rows

    raise ConfigError(f"estimator {est.name!r}: unhandled kind {est.kind!r}")


def _task(config_text: str, est_name: str) -> list:
    # process-pool entry point: rebuild everything from the serialized config
    cfg = loads_config(config_text)
    est = next(e for e in cfg.estimators if e.name == est_name)
    return estimator_rows(cfg, est)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows_csv(path: Path, rows, columns=CSV_COLUMNS) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_format_cell(row[c]) for c in columns])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest_entry(path: Path, config_text: str, extra=None) -> dict:
    entry = {
        "file": path.name,
        "sha256": _sha256(path),
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "package": "fluctchain",
        "version": __version__,
    }
    if extra:
        entry.update(extra)
    return entry


def run_experiment(
    config, workers: int = 1, seed: int | None = None, out: str | None = None
) -> list:
    """Run every configured estimator; returns the written artifact paths."""
    cfg = load_config(config) if not isinstance(config, ExperimentConfig) else config
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed, warnings=[])
    if out is not None:
        cfg = dataclasses.replace(cfg, output_dir=out, warnings=[])
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = dumps_config(cfg)
    for w in cfg.warnings:
        log.warning("%s", w)

    started = time.monotonic()
    results = {}
    if workers > 1 and len(cfg.estimators) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                est.name: pool.submit(_task, config_text, est.name)
                for est in cfg.estimators
            }
            for name, fut in futures.items():
                results[name] = fut.result()
    else:
        for est in cfg.estimators:
            results[est.name] = estimator_rows(cfg, est)

    paths = []
    manifest = []
    wall = time.monotonic() - started
    for est in cfg.estimators:  # fixed order: config order (sorted by name)
        path = out_dir / f"results_{est.name}.csv"
        write_rows_csv(path, results[est.name])
        manifest.append(
            _manifest_entry(path, config_text, {"estimator": est.name, "wall_time_s": round(wall, 3)})
        )
        paths.append(path)
    if cfg.warnings:
        manifest.append({"warnings": cfg.warnings})
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for entry in manifest:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    paths.append(manifest_path)
    return paths


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "n":
        n = int(value)
        ratio = cfg.scaling.lattice_len // cfg.scaling.n
        scaling = dataclasses.replace(cfg.scaling, n=n, lattice_len=ratio * n)
        return dataclasses.replace(cfg, scaling=scaling, warnings=[])
    if axis in ("a_exp", "b_exp"):
        scaling = dataclasses.replace(cfg.scaling, **{axis: float(value)})
        return dataclasses.replace(cfg, scaling=scaling, warnings=[])
    if axis == "ell":
        ests = [
            dataclasses.replace(e, params={**e.params, "ells": [int(value)]})
            if e.kind == "bg2"
            else e
            for e in cfg.estimators
        ]
        return dataclasses.replace(cfg, estimators=ests, warnings=[])
    raise ConfigError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}")


def sweep(config, axis: str, values, workers: int = 1, out: str | None = None):
    """Run the experiment once per axis value and aggregate trend columns.

    Returns (artifact paths, failures) where failures is a list of
    (value, error message) for cells that raised.
    """
    cfg = load_config(config) if not isinstance(config, ExperimentConfig) else config
    if out is not None:
        cfg = dataclasses.replace(cfg, output_dir=out, warnings=[])
    values = list(values)
    if values != sorted(values):
        raise ConfigError("sweep values must be sorted ascending")
    base_dir = Path(cfg.output_dir)
    base_dir.mkdir(parents=True, exist_ok=True)

    all_rows = []
    failures = []
    for value in values:
        cell = _apply_axis(cfg, axis, value)
        cell = dataclasses.replace(
            cell, output_dir=str(base_dir / f"{axis}_{value}"), warnings=cell.warnings
        )
        try:
            paths = run_experiment(cell, workers=workers)
        except FluctchainError as exc:
            failures.append((value, f"{type(exc).__name__}: {exc}"))
            continue
        for path in paths:
            if path.suffix != ".csv":
                continue
            with open(path, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    row["axis"] = axis
                    row["axis_value"] = _format_cell(value)
                    all_rows.append(row)

    # ordinal decay verdict per estimator across axis values
    verdicts = {}
    for name in sorted({r["estimator"] for r in all_rows}):
        by_value = {}
        for r in all_rows:
            if r["estimator"] == name:
                by_value.setdefault(float(r["axis_value"]), []).append(float(r["value"]))
        points = [sum(by_value[v]) / len(by_value[v]) for v in sorted(by_value)]
        decreasing = all(b < a for a, b in zip(points, points[1:]))
        verdicts[name] = "decreasing" if len(points) > 1 and decreasing else "not-decreasing"
    for row in all_rows:
        row["verdict"] = verdicts.get(row["estimator"], "not-decreasing")

    columns = ("axis", "axis_value") + CSV_COLUMNS + ("verdict",)
    sweep_path = base_dir / "sweep.csv"
    with open(sweep_path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in all_rows:
            w.writerow([row[c] for c in columns])

    manifest_path = base_dir / "sweep_manifest.jsonl"
    config_text = dumps_config(cfg)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_manifest_entry(sweep_path, config_text), sort_keys=True) + "\n")
        for value, message in failures:
            fh.write(json.dumps({"failed_cell": _format_cell(value), "error": message}) + "\n")
    return [sweep_path, manifest_path], failures


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fluctchain",
        description="Statistical laboratory for anharmonic chains with exchange noise",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run every estimator in a config")
    run_p.add_argument("config")
    sweep_p = sub.add_parser("sweep", help="run a config across one axis")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    plot_p = sub.add_parser("plot", help="render SVG plots from result CSVs")
    plot_p.add_argument("results_dir")

    for p in (run_p, sweep_p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None)
    plot_p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_argparser().parse_args(argv)
    try:
        if args.command == "run":
            paths = run_experiment(args.config, workers=args.workers,
                                   seed=args.seed, out=args.out)
            for p in paths:
                log.info("wrote %s", p)
            return 0
        if args.command == "sweep":
            raw = [s for s in args.values.split(",") if s.strip()]
            values = [float(s) if "." in s else int(s) for s in raw]
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = dataclasses.replace(cfg, seed=args.seed, warnings=[])
            paths, failures = sweep(cfg, args.axis, values,
                                    workers=args.workers, out=args.out)
            for p in paths:
                log.info("wrote %s", p)
            if failures:
                for value, message in failures:
                    log.error("cell %s failed: %s", value, message)
                return 4
            return 0
        if args.command == "plot":
            from .plots import emit_plots

            paths = emit_plots(args.results_dir, args.out)
            for p in paths:
                log.info("wrote %s", p)
            return 0
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except (NumericError, BlowUpError) as exc:
        log.error("numeric error: %s", exc)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
