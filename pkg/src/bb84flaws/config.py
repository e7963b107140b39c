"""TOML scenario files.

A scenario file has optional top-level keys ``mode``, ``wang_z`` and
``gain_model`` and optional tables ``[intensities]``, ``[polarization]``,
``[protocol]``, ``[channel]`` and ``[sweep]``. Relative paths are resolved
against the directory of the file. See ``data/scenarios`` for examples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import ingest
from .errors import Bb84FlawsError, ConfigError
from .finite_key import (
    ChannelModel,
    FixedDelta,
    FixedFidelity,
    IntensitySet,
    PolarizationSource,
    ProtocolConfig,
    Scenario,
)
from .photon_stats import GaussianParams
from .polarization import GaussianAngular, min_fidelity_pure

TOP_KEYS = {"mode", "wang_z", "gain_model", "intensities", "polarization", "protocol",
            "channel", "sweep"}
POLARIZATION_SOURCES = ("delta", "fidelity", "gaussian", "binned", "minfid")


@dataclass(frozen=True)
class Sweep:
    from_km: float = 0.0
    to_km: float = 170.0
    step_km: float = 5.0


@dataclass
class LoadedConfig:
    scenario: Scenario
    sweep: Sweep
    inputs: List[Path]
    resolved: Dict[str, Any]
    notes: Dict[str, Any]


def _table(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table", key=key)
    return value


def _check_keys(table: dict, allowed, prefix: str):
    for k in table:
        if k not in allowed:
            raise ConfigError(f"unknown key {prefix}{k}", key=f"{prefix}{k}")


def _number(table: dict, key: str, prefix: str, default=None) -> Optional[float]:
    if key not in table:
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{prefix}{key} must be a finite number, got {value!r}",
                          key=f"{prefix}{key}")
    return float(value)


def _build(cls, table: dict, prefix: str, converters=None):
    converters = converters or {}
    names = {f.name for f in fields(cls)}
    _check_keys(table, names, prefix)
    kwargs = {}
    for k, v in table.items():
        kwargs[k] = converters[k](v) if k in converters else _number(table, k, prefix)
    try:
        return cls(**kwargs)
    except (Bb84FlawsError, TypeError) as exc:
        # Name the offending field when the message mentions one.
        hit = next((n for n in sorted(names, key=len, reverse=True) if n in str(exc)), None)
        key = prefix + hit if hit else prefix.rstrip(".")
        raise ConfigError(f"invalid {key}: {exc}", key=key) from exc


def parse_fec_table(value, key: str = "protocol.fec_table") -> Tuple[Tuple[float, float], ...]:
    try:
        table = tuple((float(e), float(f)) for e, f in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a list of [qber, f] pairs", key=key) from None
    if not table:
        raise ConfigError(f"{key} is empty", key=key)
    return table


def load_fec_table(path) -> Tuple[Tuple[float, float], ...]:
    """Read an ``qber,f`` CSV (with header) into an f_ec table."""
    import csv

    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"f_ec table {path} not found", key="fec-table")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return parse_fec_table([(a, b) for a, b in rows[1:]], "fec-table")
    except ValueError:
        raise ConfigError(f"f_ec table {path} must have two columns", key="fec-table") from None


def _resolve(base: Path, value, key: str) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a path string", key=key)
    path = (base / value).resolve()
    if not path.is_file():
        raise ConfigError(f"{key}: file {path} not found", key=key)
    return path


def _intensities(table: dict, base: Path, inputs: List[Path], notes: dict) -> IntensitySet:
    _check_keys(table, {"mu", "nu1", "nu2", "samples"}, "intensities.")
    fitted = {}
    if "samples" in table:
        path = _resolve(base, table["samples"], "intensities.samples")
        inputs.append(path)
        sets = ingest.load_samples(path, "intensity")
        for label, samples in sets.items():
            fit = ingest.fit_gaussian(samples)
            fitted[label] = fit.params
        notes["intensity_fit"] = {k: {"mean": v.mean, "sigma": v.sigma}
                                  for k, v in fitted.items()}
    defaults = {"mu": 0.3, "nu1": 0.1, "nu2": 1e-3}
    out = {}
    for name in ("mu", "nu1", "nu2"):
        if name in table:
            entry = table[name]
            prefix = f"intensities.{name}."
            if isinstance(entry, (int, float)) and not isinstance(entry, bool):
                entry = {"mean": entry}
            if not isinstance(entry, dict):
                raise ConfigError(f"intensities.{name} must be a number or table",
                                  key=f"intensities.{name}")
            _check_keys(entry, {"mean", "sigma"}, prefix)
            mean = _number(entry, "mean", prefix, defaults[name])
            sigma = _number(entry, "sigma", prefix, 0.0)
            try:
                out[name] = GaussianParams(mean, sigma)
            except Bb84FlawsError as exc:
                raise ConfigError(str(exc), key=f"intensities.{name}") from exc
        elif name in fitted:
            out[name] = fitted[name]
        else:
            out[name] = GaussianParams(defaults[name], 0.0)
    return IntensitySet(out["mu"], out["nu1"], out["nu2"])


def _polarization(table: dict, base: Path, inputs: List[Path], notes: dict) -> PolarizationSource:
    allowed = {"source", "delta", "fidelity", "stokes", "level", "interval", "phi_bins",
               "theta_bins", "drop_outliers", "phi_mean", "phi_sigma", "theta_mean",
               "theta_sigma"}
    _check_keys(table, allowed, "polarization.")
    source = table.get("source", "delta")
    if source not in POLARIZATION_SOURCES:
        raise ConfigError(f"polarization.source must be one of {POLARIZATION_SOURCES}",
                          key="polarization.source")
    if source == "delta":
        return FixedDelta(_number(table, "delta", "polarization.", 0.0))
    if source == "fidelity":
        if "fidelity" not in table:
            raise ConfigError("polarization.fidelity is required", key="polarization.fidelity")
        return FixedFidelity(_number(table, "fidelity", "polarization."))
    if source == "gaussian" and "stokes" not in table:
        try:
            return GaussianAngular(tuple(map(float, table["phi_mean"])),
                                   tuple(map(float, table["phi_sigma"])),
                                   float(table["theta_mean"]), float(table["theta_sigma"]))
        except KeyError as exc:
            raise ConfigError(f"polarization.{exc.args[0]} is required",
                              key=f"polarization.{exc.args[0]}") from None
        except (TypeError, ValueError, Bb84FlawsError) as exc:
            raise ConfigError(f"invalid Gaussian angular parameters: {exc}",
                              key="polarization") from exc
    if "stokes" not in table:
        raise ConfigError(f"polarization.stokes is required for source {source!r}",
                          key="polarization.stokes")
    path = _resolve(base, table["stokes"], "polarization.stokes")
    inputs.append(path)
    states = ingest.state_angles(ingest.load_samples(path, "stokes"))
    if source == "gaussian":
        fit = ingest.fit_angular(states, bool(table.get("drop_outliers", True)))
        notes["angular_fit"] = fit.angular
        return fit.angular
    if source == "binned":
        return ingest.binned_angular(states, int(table.get("phi_bins", ingest.ANGLE_BINS)),
                                     int(table.get("theta_bins", ingest.ANGLE_BINS)),
                                     bool(table.get("drop_outliers", False)))
    if "interval" not in table:
        raise ConfigError("polarization.interval (quantile or gaussian) is required for minfid",
                          key="polarization.interval")
    level = _number(table, "level", "polarization.", 0.9)
    try:
        phi, theta = ingest.angle_ranges(states, level, table["interval"],
                                         bool(table.get("drop_outliers", True)))
    except Bb84FlawsError as exc:
        raise ConfigError(str(exc), key="polarization.interval") from exc
    f = min_fidelity_pure(phi, theta)
    notes["minfid"] = {"phi_ranges": phi, "theta_range": theta, "fidelity": f}
    return FixedFidelity(f)


def load_config(path) -> LoadedConfig:
    """Parse a scenario file.

    Raises:
        ConfigError: naming the offending key for any invalid entry.
        IngestError: if a referenced sample file cannot be read.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found", key=None)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", key=None) from exc
    return build_config(data, path.parent, [path])


def build_config(data: dict, base: Path = Path("."), inputs=None) -> LoadedConfig:
    inputs = list(inputs or [])
    _check_keys(data, TOP_KEYS, "")
    notes: Dict[str, Any] = {}
    protocol = _build(ProtocolConfig, _table(data, "protocol"), "protocol.",
                      {"fec_table": parse_fec_table,
                       "bound_count": lambda v: int(v)})
    channel = _build(ChannelModel, _table(data, "channel"), "channel.")
    sweep = _build(Sweep, _table(data, "sweep"), "sweep.")
    intensities = _intensities(_table(data, "intensities"), base, inputs, notes)
    polarization = _polarization(_table(data, "polarization"), base, inputs, notes)
    extra = {}
    for key in ("mode", "gain_model"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError(f"{key} must be a string", key=key)
            extra[key] = data[key]
    if "wang_z" in data:
        extra["wang_z"] = _number(data, "wang_z", "")
    try:
        scenario = Scenario(intensities, polarization, protocol, channel, **extra)
    except Bb84FlawsError as exc:
        msg = str(exc)
        bad = "gain_model" if "gain" in msg else "mode" if "mode" in msg else "wang_z"
        raise ConfigError(str(exc), key=bad) from exc
    return LoadedConfig(scenario, sweep, inputs, data, notes)


def parse_mode(spec: str, scenario: Scenario) -> Scenario:
    """Apply a mode string such as ``vacuum-nu2``, ``wang:2.3`` or ``delta:1e-8``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "wang":
            return replace(scenario, mode="wang", wang_z=float(arg) if arg else scenario.wang_z)
        if name == "delta":
            return replace(scenario, polarization=FixedDelta(float(arg)))
        if name == "fidelity":
            return replace(scenario, polarization=FixedFidelity(float(arg)))
        if arg:
            raise ConfigError(f"mode {name!r} takes no argument", key="mode")
        return replace(scenario, mode=name)
    except ValueError:
        raise ConfigError(f"bad numeric argument in mode {spec!r}", key="mode") from None
    except Bb84FlawsError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid mode {spec!r}: {exc}", key="mode") from exc
