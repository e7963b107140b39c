"""Loading and fitting of source-characterization samples.

Two CSV layouts are understood:

* intensity: header ``label,intensity`` with labels ``mu``, ``nu1``, ``nu2``
* stokes: header ``state,s1,s2,s3`` with states ``1`` to ``4``
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from .decoy_bounds import normal_quantile
from .errors import DegenerateFitError, DomainError, IngestError, InsufficientDataError
from .photon_stats import GaussianParams
from .polarization import (
    BinnedAngular,
    BinnedPdf,
    GaussianAngular,
    stokes_to_angles_array,
    unwrap_cluster,
)

SCHEMAS = {
    "intensity": (("label", "intensity"), ("mu", "nu1", "nu2")),
    "stokes": (("state", "s1", "s2", "s3"), ("1", "2", "3", "4")),
}
MIN_FIT_SAMPLES = 30
MIN_QUANTILE_SAMPLES = 100
INTENSITY_BINS = 50
ANGLE_BINS = 36
OUTLIER_MADS = 4.0
POOR_FIT_THRESHOLD = 0.2


@dataclass(frozen=True)
class SampleSet:
    """Samples sharing one label: a 1-D array of intensities or an (n, 3) Stokes array."""

    label: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0:
            raise DomainError(f"sample set {self.label!r} is empty")
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"sample set {self.label!r} has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def load_samples(path, schema: str) -> Dict[str, SampleSet]:
    """Read a sample CSV into one :class:`SampleSet` per label, in label order.

    Raises:
        IngestError: for a missing file, wrong header, malformed or
            non-finite field, or unknown label; the message carries the line.
    """
    if schema not in SCHEMAS:
        raise DomainError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    header, labels = SCHEMAS[schema]
    path = Path(path)
    if not path.is_file():
        raise IngestError("file not found", path)
    rows: Dict[str, list] = {lab: [] for lab in labels}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise IngestError(f"expected header {','.join(header)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} fields, got {len(row)}", path, line)
            label = row[0].strip()
            if label not in rows:
                raise IngestError(f"unknown label {label!r}", path, line)
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise IngestError(f"malformed number in {row[1:]}", path, line) from None
            if not all(math.isfinite(v) for v in vals):
                raise IngestError("non-finite value", path, line)
            rows[label].append(vals[0] if schema == "intensity" else vals)
    out = {lab: SampleSet(lab, np.array(v)) for lab, v in rows.items() if v}
    if not out:
        raise IngestError("no data rows", path)
    return out


@dataclass(frozen=True)
class FitResult:
    """Gaussian fit with a binned goodness-of-fit.

    ``goodness`` is the sum of squared residuals between the histogram
    density and the fitted density at bin centers; ``misfit`` divides it by
    the squared norm of the fitted density so it is scale free.
    """

    mean: float
    sigma: float
    goodness: float
    misfit: float
    poor_fit: bool
    edges: np.ndarray
    count: int

    @property
    def params(self) -> GaussianParams:
        """Intensity parameters; only valid for a non-negative mean."""
        return GaussianParams(self.mean, self.sigma)


def _as_1d(samples) -> np.ndarray:
    vals = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, float)
    if vals.ndim != 1:
        raise DomainError("expected one-dimensional samples")
    return vals


def fit_gaussian(samples, bin_count: int = INTENSITY_BINS) -> FitResult:
    """Maximum-likelihood normal fit.

    Raises:
        InsufficientDataError: with fewer than 30 samples.
        DegenerateFitError: when all samples are equal.
    """
    vals = _as_1d(samples)
    if len(vals) < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_FIT_SAMPLES} samples, got {len(vals)}")
    # Sorting makes the floating-point sums independent of input order.
    vals = np.sort(vals)
    mean = float(np.mean(vals))
    sigma = float(np.std(vals))
    if sigma == 0 or sigma <= 1e-15 * abs(mean):
        raise DegenerateFitError("samples have zero variance")
    density, edges = np.histogram(vals, bins=bin_count, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    model = np.exp(-0.5 * ((centers - mean) / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)
    ssr = float(np.sum((density - model) ** 2))
    misfit = ssr / float(np.sum(model ** 2))
    return FitResult(mean, sigma, ssr, misfit, misfit > POOR_FIT_THRESHOLD, edges, len(vals))


def build_binned_pdf(samples, bin_count: int = ANGLE_BINS, angular: bool = False) -> BinnedPdf:
    """Normalized histogram; azimuths are first put on one continuous branch.

    If every sample has the same value the result is a single narrow bin.
    """
    if bin_count < 4:
        raise DomainError("bin_count must be at least 4")
    vals = _as_1d(samples)
    if vals.size == 0:
        raise InsufficientDataError("no samples to bin")
    if angular:
        vals = unwrap_cluster(vals)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi == lo:
        half = max(abs(lo), 1.0) * 1e-9
        edges = np.array([lo - half, lo + half])
        return BinnedPdf(edges, np.array([1.0 / (edges[1] - edges[0])]))
    counts, edges = np.histogram(vals, bins=bin_count, range=(lo, hi))
    widths = np.diff(edges)
    density = counts / (counts.sum() * widths)
    # Renormalize once more so the sum is exact to rounding.
    density = density / float(np.sum(density * widths))
    return BinnedPdf(edges, density)


def confidence_interval(samples, level: float, mode: str = "quantile") -> Tuple[float, float]:
    """Central interval holding a fraction ``level`` of the distribution.

    ``mode="quantile"`` uses empirical quantiles and needs at least 100
    samples; ``mode="gaussian"`` uses the fitted mean and sigma.
    """
    if not 0.5 < level < 1:
        raise DomainError(f"level must lie in (0.5, 1), got {level}")
    vals = _as_1d(samples)
    if mode == "quantile":
        if len(vals) < MIN_QUANTILE_SAMPLES:
            raise InsufficientDataError(
                f"quantile intervals need at least {MIN_QUANTILE_SAMPLES} samples")
        lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
        return float(lo), float(hi)
    if mode == "gaussian":
        fit = fit_gaussian(vals)
        z = normal_quantile((1 - level) / 2)
        return fit.mean - z * fit.sigma, fit.mean + z * fit.sigma
    raise DomainError(f"unknown interval mode {mode!r}")


def inlier_mask(values: np.ndarray, k: float = OUTLIER_MADS) -> np.ndarray:
    """True for samples within ``k`` median absolute deviations of the median."""
    values = np.asarray(values, dtype=float)
    med = np.median(values)
    mad = np.median(np.abs(values - med))
    if mad == 0:
        return values == med
    return np.abs(values - med) <= k * mad


@dataclass(frozen=True)
class StateAngles:
    """Azimuth (unwrapped) and polar angles of one state's Stokes samples."""

    label: str
    phi: np.ndarray
    theta: np.ndarray
    inliers: np.ndarray

    @property
    def dropped(self) -> int:
        return int(np.count_nonzero(~self.inliers))


def state_angles(stokes: Dict[str, SampleSet]) -> Tuple[StateAngles, ...]:
    """Convert each state's Stokes samples to angles, flagging outliers."""
    labels = SCHEMAS["stokes"][1]
    missing = [lab for lab in labels if lab not in stokes]
    if missing:
        raise InsufficientDataError(f"no samples for states {missing}")
    out = []
    for lab in labels:
        vals = stokes[lab].values
        if vals.ndim != 2 or vals.shape[1] != 3:
            raise DomainError(f"state {lab}: expected (n, 3) Stokes samples")
        phi, theta = stokes_to_angles_array(vals)
        phi = unwrap_cluster(phi)
        keep = inlier_mask(phi) & inlier_mask(theta)
        out.append(StateAngles(lab, phi, theta, keep))
    return tuple(out)


@dataclass(frozen=True)
class AngularFit:
    angular: GaussianAngular
    phi_fits: Tuple[FitResult, ...]
    theta_fit: FitResult
    dropped: Tuple[int, ...]


def fit_angular(states: Sequence[StateAngles], drop_outliers: bool = True) -> AngularFit:
    """Per-state azimuth fits and one pooled polar-angle fit."""
    pick = (lambda s, a: a[s.inliers]) if drop_outliers else (lambda s, a: a)
    phi_fits = tuple(fit_gaussian(pick(s, s.phi), ANGLE_BINS) for s in states)
    theta_fit = fit_gaussian(np.concatenate([pick(s, s.theta) for s in states]), ANGLE_BINS)
    angular = GaussianAngular(
        tuple(f.mean for f in phi_fits),
        tuple(f.sigma for f in phi_fits),
        theta_fit.mean,
        theta_fit.sigma,
    )
    dropped = tuple(s.dropped if drop_outliers else 0 for s in states)
    return AngularFit(angular, phi_fits, theta_fit, dropped)


def binned_angular(states: Sequence[StateAngles], phi_bins: int = ANGLE_BINS,
                   theta_bins: int = ANGLE_BINS, drop_outliers: bool = False) -> BinnedAngular:
    """Histogram distributions of the four azimuths and the pooled polar angle."""
    pick = (lambda s, a: a[s.inliers]) if drop_outliers else (lambda s, a: a)
    phi = tuple(build_binned_pdf(pick(s, s.phi), phi_bins) for s in states)
    theta = build_binned_pdf(np.concatenate([pick(s, s.theta) for s in states]), theta_bins)
    return BinnedAngular(phi, theta)


def angle_ranges(states: Sequence[StateAngles], level: float, mode: str,
                 drop_outliers: bool = True):
    """Azimuth intervals per state and one polar interval at confidence ``level``."""
    pick = (lambda s, a: a[s.inliers]) if drop_outliers else (lambda s, a: a)
    phi = [confidence_interval(pick(s, s.phi), level, mode) for s in states]
    theta = confidence_interval(np.concatenate([pick(s, s.theta) for s in states]), level, mode)
    theta = (max(theta[0], 0.0), min(theta[1], math.pi))
    return phi, theta
