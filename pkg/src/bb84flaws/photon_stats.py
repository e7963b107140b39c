"""Photon-number statistics of phase-randomized coherent sources.

Three source kinds are supported:

* :class:`Poissonian` -- fixed mean photon number.
* :class:`GaussianMixed` -- Poisson statistics whose mean fluctuates from
  pulse to pulse following a normal law truncated to positive intensities.
* :class:`VacuumOnly` -- the conservative replacement of the weakest decoy
  by the vacuum state.

For the Gaussian mixture two independent evaluation routes are provided: a
closed form built on the confluent hypergeometric function (``"closed"``) and
adaptive quadrature of the mixing integral (``"quad"``). They are cross-checked
in the test suite.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalFailure

N_MAX = 60

HYP1F1_RTOL = 1e-12
HYP1F1_MAX_TERMS = 10_000

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    """Mean and standard deviation of a fluctuating pulse intensity."""

    mean: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sigma)):
            raise DomainError("Gaussian parameters must be finite")
        if self.mean < 0 or self.sigma < 0:
            raise DomainError(
                f"mean and sigma must be non-negative, got {self.mean}, {self.sigma}"
            )

    def truncation_mass(self) -> float:
        """Probability mass of the normal law on the positive half-line."""
        if self.sigma == 0:
            return 1.0
        return 0.5 * (1.0 + math.erf(self.mean / (math.sqrt(2.0) * self.sigma)))


@dataclass(frozen=True)
class Poissonian:
    mean: float

    def __post_init__(self):
        if not math.isfinite(self.mean) or self.mean < 0:
            raise DomainError(f"Poissonian mean must be >= 0, got {self.mean}")


@dataclass(frozen=True)
class GaussianMixed:
    params: GaussianParams

    def __post_init__(self):
        if self.params.sigma <= 0:
            raise DomainError(
                "GaussianMixed needs sigma > 0; use Poissonian for a constant intensity"
            )

    @property
    def mean(self) -> float:
        return self.params.mean

    @property
    def sigma(self) -> float:
        return self.params.sigma


@dataclass(frozen=True)
class VacuumOnly:
    @property
    def mean(self) -> float:
        return 0.0


IntensityModel = Union[Poissonian, GaussianMixed, VacuumOnly]


def gaussian_mixed(mean: float, sigma: float) -> GaussianMixed:
    return GaussianMixed(GaussianParams(mean, sigma))


def gaussian_pdf(x: float, params: GaussianParams) -> float:
    """Normal probability density of intensity ``x``.

    Raises:
        DomainError: if ``params.sigma`` is zero.
    """
    if params.sigma <= 0:
        raise DomainError("gaussian_pdf requires sigma > 0")
    z = (x - params.mean) / params.sigma
    return math.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * params.sigma)


def log_hyp1f1(a: float, b: float, x: float, rtol: float = HYP1F1_RTOL,
               max_terms: int = HYP1F1_MAX_TERMS) -> float:
    """Natural log of Kummer's function 1F1(a; b; x) for a, b > 0 and x >= 0.

    Sums the power series with every term positive, so the log can be
    accumulated without overflow. Summation stops once terms are decreasing
    and the next term is below ``rtol`` relative to the partial sum.

    Raises:
        NumericalFailure: if more than ``max_terms`` terms would be needed.
    """
    if a <= 0 or b <= 0 or x < 0:
        raise DomainError("log_hyp1f1 is restricted to a, b > 0 and x >= 0")
    if x == 0:
        return 0.0
    # Terms are stored relative to a running scale so that e^x-sized sums stay finite.
    log_scale = 0.0
    total = 1.0
    term = 1.0
    for k in range(max_terms):
        ratio = (a + k) * x / ((b + k) * (k + 1))
        term *= ratio
        total += term
        if total > 1e250:
            log_scale += math.log(total)
            term /= total
            total = 1.0
        if ratio < 1.0 and term < rtol * total:
            return log_scale + math.log(total)
    raise NumericalFailure(
        f"1F1({a}; {b}; {x}) series did not converge within {max_terms} terms"
    )


def _log_poisson(n: int, mean: float) -> float:
    if mean == 0:
        return 0.0 if n == 0 else -math.inf
    return n * math.log(mean) - mean - math.lgamma(n + 1)


def _mixture_peak(n: int, mean: float, sigma: float) -> float:
    # Maximizer over t >= -mean/sigma of n*log(mean + sigma*t) - sigma*t - t^2/2,
    # written in a cancellation-free form of the quadratic root.
    b = mean + sigma * sigma
    t = 2.0 * sigma * (n - mean) / (b + math.sqrt(b * b + 4.0 * sigma * sigma * (n - mean)))
    return max(t, -mean / sigma)


def _mixture_closed_form(n: int, mean: float, sigma: float) -> float:
    shifted = mean - sigma * sigma
    x = shifted * shifted / (2.0 * sigma * sigma)
    log_t1 = math.log(sigma) + math.lgamma((n + 1) / 2.0) + log_hyp1f1((n + 1) / 2.0, 0.5, x)
    if shifted != 0:
        log_t2 = (0.5 * math.log(2.0) + math.log(abs(shifted)) + math.lgamma((n + 2) / 2.0)
                  + log_hyp1f1((n + 2) / 2.0, 1.5, x))
    else:
        log_t2 = -math.inf
    if shifted >= 0:
        log_bracket = np.logaddexp(log_t1, log_t2)
    else:
        top = max(log_t1, log_t2)
        diff = math.exp(log_t1 - top) - math.exp(log_t2 - top)
        if diff <= 1e-4:
            # Cancellation would leave fewer than ~1e-8 relative digits.
            raise NumericalFailure("closed form loses precision; use quadrature")
        log_bracket = top + math.log(diff)
    log_prefactor = (
        0.5 * (n + 1) * math.log(2.0)
        - mean * mean / (2.0 * sigma * sigma)
        + (n - 1) * math.log(sigma)
        - _LOG_SQRT_2PI
        - math.lgamma(n + 1)
        - math.log(2.0 * special.ndtr(mean / sigma))
    )
    return math.exp(log_prefactor + log_bracket)


def _mixture_quadrature(n: int, mean: float, sigma: float) -> float:
    # Integrate in the standardized variable t = (a - mean) / sigma so that
    # tiny sigma does not cost precision in the exponent.
    t_min = -mean / sigma

    def log_integrand(t):
        a = mean + sigma * t
        if a <= 0:
            return -math.inf if n > 0 else -sigma * t - 0.5 * t * t
        return n * math.log(a) - sigma * t - 0.5 * t * t

    peak = _mixture_peak(n, mean, sigma)
    log_peak = log_integrand(peak)
    # Concave log-integrand with curvature <= -1: 12 units around the peak
    # hold all but ~e^-72 of the mass.
    lo = max(t_min, peak - 12.0)
    hi = peak + 12.0
    points = [peak] if lo < peak < hi else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                lambda t: math.exp(log_integrand(t) - log_peak),
                lo, hi, points=points, epsabs=1e-15, epsrel=1e-13, limit=200,
            )
        except integrate.IntegrationWarning as exc:
            raise NumericalFailure(f"quadrature for P_{n} did not converge: {exc}") from exc
    if not value > 0 or abserr > 1e-9 * value:
        raise NumericalFailure(
            f"quadrature for P_{n} inaccurate (value={value}, abserr={abserr})"
        )
    log_value = (math.log(value) + log_peak - mean - math.lgamma(n + 1) - _LOG_SQRT_2PI
                 - math.log(special.ndtr(mean / sigma)))
    return math.exp(log_value)


@lru_cache(maxsize=65536)
def _mixture_prob(n: int, mean: float, sigma: float, method: str) -> float:
    if method == "quad":
        return _mixture_quadrature(n, mean, sigma)
    try:
        return _mixture_closed_form(n, mean, sigma)
    except NumericalFailure:
        if method == "closed-strict":
            raise
        return _mixture_quadrature(n, mean, sigma)


def photon_number_prob(n: int, model: IntensityModel, method: str = "closed") -> float:
    """Probability that a pulse drawn from ``model`` carries ``n`` photons.

    Args:
        n: photon number, ``n >= 0``.
        model: source description.
        method: for :class:`GaussianMixed` only. ``"closed"`` uses the
            hypergeometric closed form and falls back to quadrature when the
            series is too long or suffers cancellation; ``"closed-strict"``
            never falls back; ``"quad"`` always integrates numerically.

    Raises:
        DomainError: for negative ``n`` or an unknown method.
        NumericalFailure: if the selected route cannot reach full accuracy.
    """
    if int(n) != n or n < 0:
        raise DomainError(f"photon number must be a non-negative integer, got {n}")
    n = int(n)
    if isinstance(model, VacuumOnly):
        return 1.0 if n == 0 else 0.0
    if isinstance(model, Poissonian):
        return math.exp(_log_poisson(n, model.mean))
    if isinstance(model, GaussianMixed):
        if method not in ("closed", "closed-strict", "quad"):
            raise DomainError(f"unknown method {method!r}")
        return _mixture_prob(n, model.mean, model.sigma, method)
    raise DomainError(f"unsupported intensity model {model!r}")


def photon_number_distribution(model: IntensityModel, n_max: int = N_MAX,
                               method: str = "closed") -> np.ndarray:
    """Vector ``[P_0, ..., P_{n_max}]``."""
    return np.array([photon_number_prob(n, model, method) for n in range(n_max + 1)])


def check_condition_one(n: int, nu1: IntensityModel, nu2: IntensityModel) -> bool:
    """Sign test licensing the generalized vacuum-yield bound at photon number ``n``.

    True when ``P(n|nu2) P(1|nu1) - P(n|nu1) P(1|nu2) <= 0``. The degenerate
    equality only arises for a vacuum ``nu2`` (or underflow), where the
    corresponding term of the derivation vanishes identically.
    """
    if n < 2:
        raise DomainError("condition one is defined for n >= 2")
    value = (photon_number_prob(n, nu2) * photon_number_prob(1, nu1)
             - photon_number_prob(n, nu1) * photon_number_prob(1, nu2))
    return value <= 0.0


def condition_two_value(n: int, mu: IntensityModel, nu1: IntensityModel,
                        nu2: IntensityModel) -> float:
    p = photon_number_prob
    return (p(n, mu) * (p(2, nu1) * p(0, nu2) - p(2, nu2) * p(0, nu1))
            - p(2, mu) * (p(n, nu1) * p(0, nu2) - p(n, nu2) * p(0, nu1)))


def check_condition_two(n: int, mu: IntensityModel, nu1: IntensityModel,
                        nu2: IntensityModel) -> bool:
    """Sign test licensing the generalized single-photon yield bound at ``n``."""
    if n < 2:
        raise DomainError("condition two is defined for n >= 2")
    if n == 2:
        return True
    p = photon_number_prob
    value = condition_two_value(n, mu, nu1, nu2)
    scale = (abs(p(n, mu) * p(2, nu1) * p(0, nu2)) + abs(p(n, mu) * p(2, nu2) * p(0, nu1))
             + abs(p(2, mu) * p(n, nu1) * p(0, nu2)) + abs(p(2, mu) * p(n, nu2) * p(0, nu1)))
    return value >= -1e-13 * scale


@lru_cache(maxsize=1024)
def condition_one_violation(nu1: IntensityModel, nu2: IntensityModel, n_max: int = N_MAX):
    """Smallest ``n`` in ``[2, n_max]`` failing condition one, or ``None``."""
    for n in range(2, n_max + 1):
        if not check_condition_one(n, nu1, nu2):
            return n
    return None


@lru_cache(maxsize=1024)
def condition_two_violation(mu: IntensityModel, nu1: IntensityModel, nu2: IntensityModel,
                            n_max: int = N_MAX):
    """Smallest ``n`` in ``[2, n_max]`` failing condition two, or ``None``."""
    for n in range(2, n_max + 1):
        if not check_condition_two(n, mu, nu1, nu2):
            return n
    return None
