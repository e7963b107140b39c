"""Gain confidence intervals and decoy-state yield bounds.

Three estimators are provided:

* :func:`yield0_lower` / :func:`yield1_lower` -- bounds valid for any
  photon-number statistics that pass the two sign conditions checked in
  :mod:`bb84flaws.photon_stats`.
* :func:`poisson_yield_bounds` -- the textbook expressions for constant
  intensities.
* :func:`wang_q1_lower` -- the model-independent single-photon gain bound
  built from worst-case Poisson probabilities over intensity intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special

from .errors import DomainError, InvalidBoundError
from .photon_stats import (
    N_MAX,
    GaussianParams,
    IntensityModel,
    condition_one_violation,
    condition_two_violation,
    photon_number_prob,
)


@dataclass(frozen=True)
class GainRecord:
    """Transmitted and detected pulse counts for one intensity in one basis.

    Counts may be non-integer when they are expected values from a
    deterministic channel simulation.
    """

    transmitted: float
    detected: float
    epsilon: float

    def __post_init__(self):
        if self.transmitted < 0 or not 0 <= self.detected <= self.transmitted:
            raise DomainError(
                f"need 0 <= detected <= transmitted, got {self.detected}, {self.transmitted}"
            )
        if not 0 < self.epsilon < 0.5:
            raise DomainError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")

    @property
    def gain(self) -> float:
        if self.transmitted == 0:
            raise DomainError("gain undefined for zero transmitted pulses")
        return self.detected / self.transmitted


@dataclass(frozen=True)
class GainBounds:
    lower: float
    upper: float
    clamped: bool = False

    def __post_init__(self):
        if not 0 <= self.lower <= self.upper <= 1:
            raise DomainError(f"invalid gain bounds [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class YieldBounds:
    y0_lower: float
    y1_lower: float


@dataclass(frozen=True)
class BoundValue:
    """A bound clamped into [0, 1], keeping the raw value for audits."""

    value: float
    raw: float

    @property
    def clamped(self) -> bool:
        return self.value != self.raw


def clamp_unit(raw: float) -> BoundValue:
    return BoundValue(min(max(raw, 0.0), 1.0), raw)


def normal_quantile(epsilon: float) -> float:
    """Upper quantile ``z`` with ``P(Z > z) = epsilon`` for a standard normal."""
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    # ndtri is accurate deep into the tail where sqrt(2)*erfinv(1-2eps) rounds.
    return -float(special.ndtri(epsilon))


def gain_bounds(record: GainRecord) -> GainBounds:
    """Wald interval on the gain, clamped to [0, 1]."""
    n = record.transmitted
    if n == 0:
        raise DomainError("cannot bound the gain of zero transmitted pulses")
    q = record.detected / n
    half = normal_quantile(record.epsilon) * math.sqrt(q * (1.0 - q) / n)
    lo, hi = q - half, q + half
    clamped = lo < 0 or hi > 1
    return GainBounds(max(lo, 0.0), min(hi, 1.0), clamped)


def _p(n, model):
    return photon_number_prob(n, model)


def yield0_lower_value(qn1: GainBounds, qn2: GainBounds, nu1: IntensityModel,
                       nu2: IntensityModel, n_max: int = N_MAX) -> BoundValue:
    n_bad = condition_one_violation(nu1, nu2, n_max)
    if n_bad is not None:
        raise InvalidBoundError(
            f"photon-number condition one fails at n={n_bad}; vacuum-yield bound invalid"
        )
    denom = _p(0, nu2) * _p(1, nu1) - _p(0, nu1) * _p(1, nu2)
    if denom <= 0:
        raise InvalidBoundError(f"vacuum-yield denominator {denom} is not positive")
    return clamp_unit((qn2.lower * _p(1, nu1) - qn1.upper * _p(1, nu2)) / denom)


def yield0_lower(qn1: GainBounds, qn2: GainBounds, nu1: IntensityModel,
                 nu2: IntensityModel, n_max: int = N_MAX) -> float:
    """Lower bound on the vacuum yield from the two decoy gains.

    Raises:
        InvalidBoundError: if the photon-number sign condition fails for some
            ``n`` in ``[2, n_max]`` or the denominator is not positive.
    """
    return yield0_lower_value(qn1, qn2, nu1, nu2, n_max).value


def yield1_lower_value(qmu: GainBounds, qn1: GainBounds, qn2: GainBounds,
                       mu: IntensityModel, nu1: IntensityModel, nu2: IntensityModel,
                       y0_lower: float, n_max: int = N_MAX) -> BoundValue:
    n_bad = condition_two_violation(mu, nu1, nu2, n_max)
    if n_bad is not None:
        raise InvalidBoundError(
            f"photon-number condition two fails at n={n_bad}; single-photon bound invalid"
        )
    p = _p
    ratio = (p(2, nu1) * p(0, nu2) - p(2, nu2) * p(0, nu1)) / p(2, mu)
    denom = p(0, nu2) * p(1, nu1) - p(0, nu1) * p(1, nu2) - ratio * p(1, mu)
    if denom <= 0:
        raise InvalidBoundError(f"single-photon yield denominator {denom} is not positive")
    num = (qn1.lower * p(0, nu2) - qn2.upper * p(0, nu1)
           - ratio * (qmu.upper - p(0, mu) * y0_lower))
    return clamp_unit(num / denom)


def yield1_lower(qmu: GainBounds, qn1: GainBounds, qn2: GainBounds,
                 mu: IntensityModel, nu1: IntensityModel, nu2: IntensityModel,
                 y0_lower: float, n_max: int = N_MAX) -> float:
    """Lower bound on the single-photon yield for arbitrary photon statistics.

    Uses the lower gain bound of ``nu1`` and upper bounds of ``nu2`` and
    ``mu``, the worst-case orientation for every term.

    Raises:
        InvalidBoundError: if the second photon-number condition fails or the
            denominator is not positive.
    """
    return yield1_lower_value(qmu, qn1, qn2, mu, nu1, nu2, y0_lower, n_max).value


def poisson_yield_bounds(qmu: GainBounds, qn1: GainBounds, qn2: GainBounds,
                         mu_mean: float, nu1_mean: float, nu2_mean: float) -> YieldBounds:
    """Vacuum and single-photon yield bounds for constant (Poissonian) intensities.

    Raises:
        DomainError: unless ``nu2 < nu1`` and ``nu1 + nu2 < mu``.
    """
    mu, n1, n2 = mu_mean, nu1_mean, nu2_mean
    if not (0 <= n2 < n1 and n1 + n2 < mu):
        raise DomainError(
            f"need 0 <= nu2 < nu1 and nu1 + nu2 < mu, got {mu}, {n1}, {n2}"
        )
    y0 = max((n1 * qn2.lower * math.exp(n2) - n2 * qn1.upper * math.exp(n1)) / (n1 - n2), 0.0)
    y0 = min(y0, 1.0)
    y1 = (mu / ((n1 - n2) * (mu - n1 - n2))) * (
        qn1.lower * math.exp(n1) - qn2.upper * math.exp(n2)
        - (n1 * n1 - n2 * n2) / (mu * mu) * (qmu.upper * math.exp(mu) - y0)
    )
    return YieldBounds(y0, min(max(y1, 0.0), 1.0))


@dataclass(frozen=True)
class IntensityInterval:
    lower: float
    upper: float


def intensity_interval(params: GaussianParams, z: float) -> IntensityInterval:
    return IntensityInterval(params.mean - z * params.sigma, params.mean + z * params.sigma)


def _poisson(n, a):
    return a ** n / math.factorial(n) * math.exp(-a)


def bounded_probs(interval: IntensityInterval, need_lower: bool = True):
    """Worst-case Poisson probabilities ``{(n, 'u'|'l'): value}`` for n = 0, 1, 2.

    ``P0`` is largest at the smallest intensity, ``P1`` and ``P2`` (for
    intensities below one) at the largest.
    """
    lo, hi = interval.lower, interval.upper
    if need_lower and lo <= 0:
        raise InvalidBoundError(
            f"intensity lower bound {lo} is not positive"
        )
    probs = {(0, "l"): math.exp(-hi)}
    probs[(1, "u")] = _poisson(1, hi)
    probs[(2, "u")] = _poisson(2, hi)
    if need_lower:
        probs[(0, "u")] = math.exp(-lo)
        probs[(1, "l")] = _poisson(1, lo)
        probs[(2, "l")] = _poisson(2, lo)
    return probs


def wang_q1_lower_value(qmu: GainBounds, qn1: GainBounds, qn2: GainBounds,
                        mu: GaussianParams, nu1: GaussianParams, nu2: GaussianParams,
                        epsilon: float = None, z: float = None) -> BoundValue:
    if z is None:
        if epsilon is None:
            raise DomainError("give either epsilon or z")
        z = normal_quantile(epsilon)
    for name, params in (("mu", mu), ("nu1", nu1), ("nu2", nu2)):
        if params.sigma <= 0:
            raise DomainError(f"{name} needs sigma > 0")
    pm = bounded_probs(intensity_interval(mu, z))
    p1 = bounded_probs(intensity_interval(nu1, z))
    # Only the upper end of the weakest decoy enters (through P0 lower).
    p2 = bounded_probs(intensity_interval(nu2, z), need_lower=False)
    denom = pm[(2, "l")] * p1[(1, "u")] - p1[(2, "u")] * pm[(1, "l")]
    if denom <= 0:
        raise InvalidBoundError(f"Wang single-photon denominator {denom} is not positive")
    num = (qn1.lower * pm[(2, "l")] - qmu.upper * p1[(2, "u")]
           - (pm[(2, "l")] * p1[(0, "u")] - p1[(2, "u")] * pm[(0, "l")])
           * qn2.upper / p2[(0, "l")])
    return clamp_unit(pm[(1, "l")] * num / denom)


def wang_q1_lower(qmu: GainBounds, qn1: GainBounds, qn2: GainBounds,
                  mu: GaussianParams, nu1: GaussianParams, nu2: GaussianParams,
                  epsilon: float = None, z: float = None) -> float:
    """Single-photon gain lower bound from intensity intervals ``mean +- z sigma``.

    Either ``epsilon`` (tail probability of each intensity bound) or the
    quantile ``z`` itself must be given.

    Raises:
        InvalidBoundError: if a lower intensity bound that enters the formula
            is not positive, or the denominator is not positive.
    """
    return wang_q1_lower_value(qmu, qn1, qn2, mu, nu1, nu2, epsilon, z).value
