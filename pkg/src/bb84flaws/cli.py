"""Command-line front end.

Exit codes: 0 when at least one result was produced, 2 for configuration
errors, 3 for data errors and 4 when every point failed numerically.
Set ``BB84FLAWS_LOG_LEVEL`` (e.g. ``DEBUG``) for more verbose logging.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, is_dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, config, finite_key, ingest, plotting, polarization, synthetic
from .errors import Bb84FlawsError, ConfigError, DomainError, IngestError

log = logging.getLogger("bb84flaws")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(out: Path, command: str, argv: Sequence[str], resolved, inputs,
                   outputs) -> Path:
    """Write ``<out>.manifest.json`` describing how ``out`` was produced."""
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": _jsonable(resolved),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, rows: List[Dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return path


def _load(args):
    loaded = config.load_config(args.config)
    scenario = loaded.scenario
    if getattr(args, "fec_table", None):
        table = config.load_fec_table(args.fec_table)
        try:
            scenario = replace(scenario, protocol=replace(scenario.protocol, fec_table=table))
        except DomainError as exc:
            raise ConfigError(str(exc), key="fec-table") from exc
        loaded.inputs.append(Path(args.fec_table).resolve())
    return loaded, scenario


def _grid(args, loaded) -> List[float]:
    sweep = loaded.sweep
    start = sweep.from_km if args.from_km is None else args.from_km
    stop = sweep.to_km if args.to_km is None else args.to_km
    step = sweep.step_km if args.step_km is None else args.step_km
    try:
        return finite_key.distance_grid(start, stop, step)
    except DomainError as exc:
        raise ConfigError(str(exc), key="sweep") from exc


def _sweep_status(reports) -> int:
    if all(r.error for r in reports):
        log.error("every distance failed: %s", reports[0].error)
        return EXIT_NUMERIC
    for r in reports:
        if r.error:
            log.warning("%.1f km: %s", r.distance_km, r.error)
    return EXIT_OK


def cmd_keyrate(args) -> int:
    loaded, scenario = _load(args)
    if args.mode:
        if len(args.mode) > 1:
            raise ConfigError("keyrate accepts a single --mode; use compare for several",
                              key="mode")
        scenario = config.parse_mode(args.mode[0], scenario)
    grid = _grid(args, loaded)
    reports = finite_key.sweep_distances(scenario, grid)
    out = Path(args.out)
    outputs = [write_csv(out, [r.row() for r in reports])]
    if args.json:
        js = out.with_suffix(".json")
        js.write_text(json.dumps(_jsonable([r.to_dict() for r in reports]), indent=1) + "\n",
                      encoding="utf-8")
        outputs.append(js)
    if not args.no_plot:
        outputs.append(plotting.plot_ratio_curves(
            out.with_suffix(".png"), grid, {scenario.mode: [r.ratio for r in reports]}))
    crit = finite_key.critical_distance(reports)
    print(f"last distance with positive key: {crit if crit is not None else 'none'} km")
    write_manifest(out, "keyrate", args.argv, _describe(loaded, scenario), loaded.inputs,
                   outputs)
    return _sweep_status(reports)


def _describe(loaded, scenario) -> dict:
    return {"file": loaded.resolved, "scenario": scenario, "derived": loaded.notes}


def cmd_compare(args) -> int:
    loaded, scenario = _load(args)
    if not args.mode:
        raise ConfigError("compare needs at least one --mode", key="mode")
    grid = _grid(args, loaded)
    columns = {}
    status = EXIT_NUMERIC
    for spec in args.mode:
        reports = finite_key.sweep_distances(config.parse_mode(spec, scenario), grid)
        columns[spec] = [r.ratio for r in reports]
        if _sweep_status(reports) == EXIT_OK:
            status = EXIT_OK
        print(f"{spec}: last distance with positive key "
              f"{finite_key.critical_distance(reports)} km")
    rows = [{"distance_km": d, **{f"ratio[{k}]": v[i] for k, v in columns.items()}}
            for i, d in enumerate(grid)]
    out = Path(args.out)
    outputs = [write_csv(out, rows)]
    if not args.no_plot:
        outputs.append(plotting.plot_ratio_curves(out.with_suffix(".png"), grid, columns))
    write_manifest(out, "compare", args.argv, _describe(loaded, scenario) | {
        "modes": args.mode}, loaded.inputs, outputs)
    return status


def _fit_payload(fit: ingest.FitResult) -> dict:
    return {"mean": fit.mean, "sigma": fit.sigma, "goodness": fit.goodness,
            "misfit": fit.misfit, "poor_fit": fit.poor_fit, "count": fit.count,
            "bin_edges": fit.edges.tolist()}


def cmd_fit(args) -> int:
    path = Path(args.input)
    sets = ingest.load_samples(path, args.schema)
    panels = {}
    if args.schema == "intensity":
        payload = {}
        for label, s in sets.items():
            fit = ingest.fit_gaussian(s)
            payload[label] = _fit_payload(fit)
            panels[label] = {"values": s.values, "mean": fit.mean, "sigma": fit.sigma}
            print(f"{label}: mean={fit.mean:.6g} sigma={fit.sigma:.6g}"
                  f"{'  (poor fit)' if fit.poor_fit else ''}")
    else:
        states = ingest.state_angles(sets)
        fit = ingest.fit_angular(states, drop_outliers=not args.keep_outliers)
        payload = {"phi": {}, "theta": _fit_payload(fit.theta_fit), "dropped": {}}
        for s, f, n in zip(states, fit.phi_fits, fit.dropped):
            payload["phi"][s.label] = _fit_payload(f)
            payload["dropped"][s.label] = n
            keep = s.inliers if not args.keep_outliers else slice(None)
            panels[f"phi{s.label}"] = {"values": s.phi[keep], "mean": f.mean, "sigma": f.sigma}
            print(f"state {s.label}: phi_mean={f.mean:.6g} phi_sigma={f.sigma:.6g} "
                  f"dropped={n}")
        print(f"theta_mean={fit.theta_fit.mean:.6g} theta_sigma={fit.theta_fit.sigma:.6g}")
        panels["theta"] = {"values": np.concatenate([s.theta for s in states]),
                           "mean": fit.theta_fit.mean, "sigma": fit.theta_fit.sigma}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    outputs = [out]
    if not args.no_plot:
        outputs.append(plotting.plot_fit_histograms(out.with_suffix(".png"), panels))
    write_manifest(out, "fit", args.argv, {"schema": args.schema}, [path.resolve()], outputs)
    return EXIT_OK


def cmd_coin(args) -> int:
    path = Path(args.stokes)
    states = ingest.state_angles(ingest.load_samples(path, "stokes"))
    result = {"mode": args.mode}
    if args.mode == "gaussian":
        rx, ry = polarization.basis_states(ingest.fit_angular(states).angular)
        f = polarization.fidelity(rx, ry)
    elif args.mode == "binned":
        rx, ry = polarization.basis_states(ingest.binned_angular(states))
        f = polarization.fidelity(rx, ry)
    else:
        if args.interval is None:
            raise ConfigError("minfid mode needs --interval quantile|gaussian", key="interval")
        phi, theta = ingest.angle_ranges(states, args.level, args.interval)
        f = polarization.min_fidelity_pure(phi, theta)
        result.update(level=args.level, interval=args.interval, phi_ranges=phi,
                      theta_range=theta)
        for s, (lo, hi) in zip(states, phi):
            print(f"state {s.label}: phi in [{lo:.6g}, {hi:.6g}]")
        print(f"theta in [{theta[0]:.6g}, {theta[1]:.6g}]")
    delta = (1.0 - math.sqrt(f)) / 2.0
    result.update(fidelity=f, delta=delta)
    print(f"F = {f:.10f}")
    print(f"Delta = {delta:.4e}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(_jsonable(result), indent=2) + "\n", encoding="utf-8")
        settings = {k: v for k, v in vars(args).items() if k != "func"}
        write_manifest(out, "coin", args.argv, settings, [path.resolve()], [out])
    return EXIT_OK


def cmd_generate_fixture(args) -> int:
    paths = synthetic.generate(args.out_dir, args.seed)
    for p in paths:
        print(p)
    write_manifest(Path(args.out_dir) / "fixture", "generate-fixture", args.argv,
                   {"seed": args.seed}, [], paths)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bb84flaws",
        description="Finite-key rates for decoy-state BB84 with imperfect source preparation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_args(p):
        p.add_argument("--config", required=True, help="TOML scenario file")
        p.add_argument("--from-km", type=float)
        p.add_argument("--to-km", type=float)
        p.add_argument("--step-km", type=float)
        p.add_argument("--mode", action="append",
                       help="poissonian, gaussian-mixed, vacuum-nu2, wang:Z, delta:X or "
                            "fidelity:F")
        p.add_argument("--fec-table", help="CSV with header qber,f overriding the f_ec table")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")

    p = sub.add_parser("keyrate", help="secret key fraction over a distance range")
    sweep_args(p)
    p.add_argument("--json", action="store_true", help="also write a JSON mirror")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("compare", help="one ratio column per mode on a shared grid")
    sweep_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit", help="fit Gaussian models to sample files")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", choices=sorted(ingest.SCHEMAS), required=True)
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--keep-outliers", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("coin", help="fidelity and coin imbalance from Stokes samples")
    p.add_argument("--stokes", required=True)
    p.add_argument("--mode", choices=("binned", "gaussian", "minfid"), required=True)
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--interval", choices=("quantile", "gaussian"))
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=cmd_coin)

    p = sub.add_parser("generate-fixture", help="write the seeded synthetic sample files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=synthetic.DEFAULT_SEED)
    p.set_defaults(func=cmd_generate_fixture)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("BB84FLAWS_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Bb84FlawsError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
