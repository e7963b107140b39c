"""Seeded generator for the bundled characterization fixtures.

The intensity fixture draws normal samples around the nominal signal and
decoy intensities. The Stokes fixture draws four clusters on the equator of
the Poincare sphere with small systematic azimuth offsets and a sprinkling
of transition points between consecutive states, mimicking a polarimeter
that samples while the modulator is switching.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np

from .polarization import NOMINAL_PHASES

DEFAULT_SEED = 20240607


@dataclass(frozen=True)
class IntensityFixture:
    means: Tuple[float, float, float] = (0.3, 0.1, 1e-3)
    sigmas: Tuple[float, float, float] = (0.025, 0.008, 0.0091)
    samples: int = 2500


@dataclass(frozen=True)
class StokesFixture:
    phi0: float = math.radians(60.0)
    phi_offsets: Tuple[float, ...] = (0.0, 0.0096, -0.0064, 0.0032)
    phi_sigmas: Tuple[float, ...] = (0.042, 0.044, 0.040, 0.042)
    theta_mean: float = 0.5 * math.pi - 0.02
    theta_sigma: float = 0.010
    samples: int = 2500
    transition_fraction: float = 0.0056
    norm_sigma: float = 0.01
    labels: Tuple[str, ...] = field(default=("1", "2", "3", "4"))


def intensity_rows(rng: np.random.Generator, spec: IntensityFixture = IntensityFixture()):
    rows = []
    for label, mean, sigma in zip(("mu", "nu1", "nu2"), spec.means, spec.sigmas):
        rows.extend((label, v) for v in rng.normal(mean, sigma, spec.samples))
    return rows


def _stokes(phi, theta, norm):
    return np.column_stack([norm * np.cos(theta), norm * np.sin(theta) * np.cos(phi),
                            norm * np.sin(theta) * np.sin(phi)])


def stokes_rows(rng: np.random.Generator, spec: StokesFixture = StokesFixture()):
    centers = [spec.phi0 + p + d for p, d in zip(NOMINAL_PHASES, spec.phi_offsets)]
    n_trans = int(round(spec.transition_fraction * spec.samples))
    rows = []
    for i, label in enumerate(spec.labels):
        n = spec.samples - n_trans
        phi = rng.normal(centers[i], spec.phi_sigmas[i], n)
        theta = rng.normal(spec.theta_mean, spec.theta_sigma, n)
        # Points caught mid-switch toward the next state in the sequence.
        nxt = centers[(i + 1) % len(centers)]
        step = math.remainder(nxt - centers[i], 2 * math.pi)
        frac = rng.uniform(0.1, 0.9, n_trans)
        phi = np.concatenate([phi, centers[i] + frac * step])
        theta = np.concatenate([theta, rng.normal(spec.theta_mean, spec.theta_sigma, n_trans)])
        norm = rng.normal(1.0, spec.norm_sigma, len(phi))
        rows.extend((label, *row) for row in _stokes(phi, theta, norm))
    return rows


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for label, *vals in rows:
            writer.writerow([label, *(repr(float(v)) for v in vals)])
    return path


def generate(out_dir, seed: int = DEFAULT_SEED) -> Tuple[Path, Path]:
    """Write ``intensity.csv`` and ``stokes.csv`` into ``out_dir``."""
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    p1 = write_csv(out_dir / "intensity.csv", ("label", "intensity"), intensity_rows(rng))
    p2 = write_csv(out_dir / "stokes.csv", ("state", "s1", "s2", "s3"), stokes_rows(rng))
    return p1, p2
