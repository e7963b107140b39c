"""Finite-key secret key length for decoy-state BB84 with a flawed source.

Detection statistics are simulated deterministically at their expected
values from a standard fiber channel model. Every quantity the key length
depends on is carried in :class:`KeyLengthReport`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from . import decoy_bounds as db
from .errors import Bb84FlawsError, DomainError, InvariantViolation, NumericalFailure
from .photon_stats import (
    GaussianMixed,
    GaussianParams,
    IntensityModel,
    Poissonian,
    VacuumOnly,
    photon_number_prob,
)
from .polarization import (
    BinnedAngular,
    GaussianAngular,
    basis_states,
    coin_imbalance,
    fidelity,
)

log = logging.getLogger(__name__)

DEFAULT_FEC_TABLE = ((0.005, 1.60), (0.01, 1.45), (0.02, 1.35), (0.04, 1.25), (0.08, 1.18))
MODES = ("poissonian", "gaussian-mixed", "vacuum-nu2", "wang")
GAIN_MODELS = ("source", "mean")
STAT_BRACKET_EDGE = 1e-12
STAT_XTOL = 1e-10
STAT_RTOL = 1e-9


@dataclass(frozen=True)
class ProtocolConfig:
    p_x: float = 0.9
    p_y: float = 0.1
    p_mu: float = 0.5
    p_nu1: float = 0.25
    p_nu2: float = 0.25
    sift_len_x: float = 1.36e6
    hash_len: float = 50.0
    eps_decoy: float = 1e-12
    eps_pa: float = 1e-12
    eps_ver: float = 2e-11
    bound_count: int = 14
    fec_table: Tuple[Tuple[float, float], ...] = DEFAULT_FEC_TABLE

    def __post_init__(self):
        probs = (self.p_x, self.p_y, self.p_mu, self.p_nu1, self.p_nu2)
        if min(probs) <= 0 or max(probs) >= 1:
            raise DomainError("basis and intensity probabilities must lie in (0, 1)")
        if abs(self.p_x + self.p_y - 1) > 1e-12:
            raise DomainError("p_x + p_y must equal 1")
        if abs(self.p_mu + self.p_nu1 + self.p_nu2 - 1) > 1e-12:
            raise DomainError("p_mu + p_nu1 + p_nu2 must equal 1")
        for name in ("eps_decoy", "eps_pa", "eps_ver"):
            if not 0 < getattr(self, name) < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        if self.sift_len_x <= 0 or self.hash_len < 0 or self.bound_count < 1:
            raise DomainError("sift_len_x, hash_len and bound_count out of range")
        table = tuple((float(e), float(f)) for e, f in self.fec_table)
        if len(table) < 1 or any(f < 1 for _, f in table):
            raise DomainError("f_ec table must be non-empty with f >= 1")
        if any(b[0] <= a[0] for a, b in zip(table, table[1:])):
            raise DomainError("f_ec table QBER values must be strictly increasing")
        object.__setattr__(self, "fec_table", table)

    @property
    def eps_bound(self) -> float:
        return self.eps_decoy / self.bound_count

    @property
    def eps_total(self) -> float:
        return self.eps_decoy + self.eps_ver + self.eps_pa


@dataclass(frozen=True)
class ChannelModel:
    eta: float = 0.10
    p_dc: float = 1e-6
    beta: float = 0.2
    bob_loss: float = 3.0
    p_opt: float = 0.01

    def __post_init__(self):
        for name in ("eta", "p_dc", "p_opt"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")
        if self.beta < 0 or self.bob_loss < 0:
            raise DomainError("beta and bob_loss must be non-negative")

    def transmittance(self, distance_km: float) -> float:
        return 10.0 ** (-(self.beta * distance_km + self.bob_loss) / 10.0)


@dataclass(frozen=True)
class IntensitySet:
    mu: GaussianParams
    nu1: GaussianParams
    nu2: GaussianParams

    @classmethod
    def constant(cls, mu=0.3, nu1=0.1, nu2=1e-3) -> "IntensitySet":
        return cls(GaussianParams(mu, 0.0), GaussianParams(nu1, 0.0), GaussianParams(nu2, 0.0))


@dataclass(frozen=True)
class FixedDelta:
    delta: float


@dataclass(frozen=True)
class FixedFidelity:
    fidelity: float


PolarizationSource = Union[FixedDelta, FixedFidelity, BinnedAngular, GaussianAngular]


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one key-length evaluation except the distance.

    ``mode`` picks how photon-number statistics enter the yield bounds; for
    ``"wang"`` the intensity intervals are ``mean +- wang_z * sigma``.
    ``gain_model="source"`` simulates detections from the fluctuating
    intensity law, ``"mean"`` from the mean intensity only.
    """

    intensities: IntensitySet = field(default_factory=IntensitySet.constant)
    polarization: PolarizationSource = field(default_factory=lambda: FixedDelta(0.0))
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    mode: str = "poissonian"
    wang_z: float = 1.0
    gain_model: str = "source"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.gain_model not in GAIN_MODELS:
            raise DomainError(f"unknown gain model {self.gain_model!r}")
        if self.mode == "wang" and self.wang_z < 0:
            raise DomainError("wang_z must be non-negative")


@dataclass(frozen=True)
class BasisEstimate:
    q_mu: db.GainBounds
    q_nu1: db.GainBounds
    q_nu2: db.GainBounds
    y0_lower: float
    y1_lower: float
    q1_lower: float
    y0_raw: float
    y1_raw: float


@dataclass(frozen=True)
class KeyLengthReport:
    distance_km: float
    l_sec: float
    l_ver: float
    l_sec_raw: float = float("nan")
    gain_mu: float = float("nan")
    qber_mu: float = float("nan")
    x: Optional[BasisEstimate] = None
    y: Optional[BasisEstimate] = None
    m1_x: float = float("nan")
    m1_y: float = float("nan")
    m0_y: float = float("nan")
    e1_y: float = float("nan")
    delta: float = float("nan")
    delta_prime: float = float("nan")
    theta_coin: float = float("nan")
    e1_tilde: float = float("nan")
    theta_stat: float = float("nan")
    e_phase: float = float("nan")
    leak: float = float("nan")
    fec: float = float("nan")
    bounds_used: int = 0
    flags: Tuple[str, ...] = ()
    error: Optional[str] = None

    @property
    def ratio(self) -> float:
        return self.l_sec / self.l_ver

    def row(self) -> dict:
        """Flat mapping of scalar fields, suitable for a CSV row."""
        out = {"distance_km": self.distance_km, "l_sec": self.l_sec, "l_ver": self.l_ver,
               "ratio": self.ratio}
        for key in ("l_sec_raw", "gain_mu", "qber_mu", "m1_x", "m1_y", "m0_y", "e1_y",
                    "delta", "delta_prime", "theta_coin", "e1_tilde", "theta_stat",
                    "e_phase", "leak", "fec", "bounds_used"):
            out[key] = getattr(self, key)
        for name in ("x", "y"):
            est = getattr(self, name)
            out[f"y0_lower_{name}"] = est.y0_lower if est else float("nan")
            out[f"y1_lower_{name}"] = est.y1_lower if est else float("nan")
        out["flags"] = ";".join(self.flags)
        out["error"] = self.error or ""
        return out

    def to_dict(self) -> dict:
        return asdict(self) | {"ratio": self.ratio}


class EpsilonBudget:
    """Hands out the per-bound failure probability and counts the bounds taken."""

    def __init__(self, cfg: ProtocolConfig):
        self.cfg = cfg
        self.used = 0

    def take(self) -> float:
        self.used += 1
        if self.used > self.cfg.bound_count:
            raise InvariantViolation(
                f"more than {self.cfg.bound_count} confidence bounds requested")
        return self.cfg.eps_bound

    def close(self) -> int:
        if self.used != self.cfg.bound_count:
            raise InvariantViolation(
                f"{self.used} confidence bounds used, budget assumes {self.cfg.bound_count}")
        return self.used


def binary_entropy(x: float) -> float:
    """Shannon binary entropy in bits; 0 at the endpoints."""
    if not 0 <= x <= 1:
        raise DomainError(f"argument must lie in [0, 1], got {x}")
    return float((special.entr(x) + special.entr(1.0 - x)) / math.log(2))


def _no_click(params: GaussianParams, rate: float) -> float:
    """``E[exp(-rate * alpha)]`` for the intensity law truncated at zero."""
    m, s = params.mean, params.sigma
    if s == 0:
        return math.exp(-rate * m)
    # Laplace transform of the truncated normal, ratio of tails in log form.
    log_tail = special.log_ndtr((m - rate * s * s) / s) - special.log_ndtr(m / s)
    return math.exp(-rate * m + 0.5 * (rate * s) ** 2 + log_tail)


def channel_gain_qber(alpha: Union[float, GaussianParams], distance_km: float,
                      ch: ChannelModel) -> Tuple[float, float]:
    """Expected gain and QBER at ``distance_km``.

    ``alpha`` is either a constant intensity or a fluctuating one; in the
    latter case the no-click probability is averaged over the positive part
    of its normal law.
    """
    if distance_km < 0:
        raise DomainError("distance must be non-negative")
    params = alpha if isinstance(alpha, GaussianParams) else GaussianParams(float(alpha), 0.0)
    rate = ch.transmittance(distance_km) * ch.eta
    if params.sigma == 0:
        click = -math.expm1(-rate * params.mean)
    else:
        click = 1.0 - _no_click(params, rate)
    gain = 2.0 * ch.p_dc + click
    if gain == 0:
        return 0.0, 0.5
    return gain, (ch.p_dc + ch.p_opt * click) / gain


@dataclass(frozen=True)
class PulseCounts:
    n_x: Tuple[float, float, float]
    n_y: Tuple[float, float, float]
    sift_len_y: float
    l_ver_x: float


def pulse_counts(cfg: ProtocolConfig, q_mu_x: float) -> PulseCounts:
    """Transmitted pulses per intensity ``(mu, nu1, nu2)`` and basis for a fixed sifted length."""
    if q_mu_x <= 0:
        raise DomainError("signal gain must be positive")
    n_mu = cfg.sift_len_x / (cfg.p_x * q_mu_x)
    n_x = (n_mu, n_mu * cfg.p_nu1 / cfg.p_mu, n_mu * cfg.p_nu2 / cfg.p_mu)
    n_y = tuple(n * cfg.p_y / cfg.p_x for n in n_x)
    return PulseCounts(n_x, n_y, cfg.sift_len_x * cfg.p_y ** 2 / cfg.p_x ** 2, cfg.sift_len_x)


def _lower_binomial(mean_count: float, p: float, z: float) -> float:
    return max(mean_count - z * math.sqrt(mean_count * (1.0 - p)), 0.0)


def single_photon_bits_lower(l_ver: float, q1_lower: float, q_mu_upper: float,
                             epsilon: float) -> float:
    """Lower bound on the verified bits that came from single-photon pulses."""
    if q_mu_upper <= 0 or q1_lower < 0:
        raise DomainError("need q_mu_upper > 0 and q1_lower >= 0")
    ratio = min(q1_lower / q_mu_upper, 1.0)
    return _lower_binomial(l_ver * ratio, ratio, db.normal_quantile(epsilon))


def vacuum_error_bits_lower(n_mu_y: float, cfg: ProtocolConfig, p0_mu: float,
                            y0_lower: float, epsilon: float) -> float:
    """Lower bound on the sifted errors caused by vacuum pulses in the test basis."""
    if n_mu_y < 0 or not 0 <= p0_mu <= 1 or not 0 <= y0_lower <= 1:
        raise DomainError("vacuum error inputs out of range")
    p = cfg.p_y * p0_mu * y0_lower / 2.0
    return _lower_binomial(n_mu_y * p, p, db.normal_quantile(epsilon))


def single_photon_bit_error_upper(sift_len_y: float, qber_y: float, m0_lower: float,
                                  m1_y_lower: float) -> float:
    """Upper bound on the single-photon bit error rate in the test basis, in [0, 1/2]."""
    if m1_y_lower <= 0:
        raise DomainError("single-photon bit count must be positive")
    return min(max((sift_len_y * qber_y - m0_lower) / m1_y_lower, 0.0), 0.5)


def coin_correction(e1_y_upper: float, delta_prime: float) -> float:
    """Phase-error correction due to basis dependence of the source."""
    if not 0 <= e1_y_upper <= 0.5 or not 0 <= delta_prime <= 0.5:
        raise DomainError("rates must lie in [0, 1/2]")
    d, e = delta_prime, e1_y_upper
    return (4 * d * (1 - d) * (1 - 2 * e)
            + 4 * (1 - 2 * d) * math.sqrt(d * (1 - d) * e * (1 - e)))


def _phi(u: float) -> float:
    """``(1+u) log(1+u) - u`` without cancellation near zero."""
    if abs(u) < 0.1:
        total, power = 0.0, u * u
        for k in range(2, 40):
            total += power / (k * (k - 1)) * (1 if k % 2 == 0 else -1)
            power *= u
        return total
    return (1.0 + u) * math.log1p(u) - u


def _entropy_remainder(x: float, d: float) -> float:
    """``H(x+d) - H(x) - H'(x) d`` in nats for the natural binary entropy ``H``."""
    return -x * _phi(d / x) - (1.0 - x) * _phi(-d / (1.0 - x))


def stat_xi(theta: float, e1_tilde: float, m1_y: float, m1_x: float) -> float:
    """Entropy gap of the sampling bound, in bits.

    Written as a difference of second-order entropy remainders, which is
    algebraically equal to the three-entropy form but keeps full relative
    precision when ``theta`` is small.
    """
    a = m1_x / (m1_x + m1_y)
    if a <= 0.5:
        return (_entropy_remainder(e1_tilde, a * theta)
                - a * _entropy_remainder(e1_tilde, theta)) / math.log(2)
    # Same quantity expanded around e1_tilde + theta; avoids cancellation as a -> 1.
    b = m1_y / (m1_x + m1_y)
    y = e1_tilde + theta
    return (_entropy_remainder(y, -b * theta)
            - b * _entropy_remainder(y, -theta)) / math.log(2)


def stat_log2_lhs(theta: float, e1_tilde: float, m1_y: float, m1_x: float) -> float:
    """Base-2 logarithm of the left side of the sampling equation."""
    s = m1_x + m1_y
    pref = 0.5 * (math.log2(s) - math.log2(e1_tilde * (1 - e1_tilde))
                  - math.log2(m1_y) - math.log2(m1_x))
    return pref - s * stat_xi(theta, e1_tilde, m1_y, m1_x)


def statistical_correction(e1_tilde: float, m1_y_lower: float, m1_x_lower: float,
                           epsilon: float) -> float:
    """Phase-error correction for finite, unequal sample sizes.

    Solves ``lhs(theta) = epsilon`` by bisection on the log scale. A zero
    ``e1_tilde`` is replaced by half an error in the test sample.

    Raises:
        NumericalFailure: when the equation has no root in the bracket.
    """
    if m1_y_lower <= 0 or m1_x_lower <= 0:
        raise DomainError("single-photon bit counts must be positive")
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    if not 0 <= e1_tilde < 0.5:
        raise DomainError(f"e1_tilde must lie in [0, 1/2), got {e1_tilde}")
    e = e1_tilde if e1_tilde > 0 else min(0.5 / m1_y_lower, 0.25)
    target = math.log2(epsilon)

    def g(t):
        return stat_log2_lhs(t, e, m1_y_lower, m1_x_lower) - target

    lo, hi = STAT_BRACKET_EDGE, 1.0 - e - STAT_BRACKET_EDGE
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0 > g_hi):
        raise NumericalFailure(
            f"sampling equation has no sign change on [{lo}, {hi}]: {g_lo}, {g_hi}")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        g_mid = g(mid)
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < STAT_XTOL and abs(math.expm1(g_mid * math.log(2))) < STAT_RTOL:
            return mid


@dataclass(frozen=True)
class LeakEstimate:
    bits: float
    fec: float
    clamped: bool


def fec_lookup(qber: float, table: Sequence[Tuple[float, float]]) -> Tuple[float, bool]:
    xs = [e for e, _ in table]
    ys = [f for _, f in table]
    clamped = qber < xs[0] or qber > xs[-1]
    return float(np.interp(qber, xs, ys)), clamped


def leak_estimate(sift_len: float, qber: float, cfg: ProtocolConfig) -> LeakEstimate:
    """Bits disclosed during error correction and verification."""
    if not 0 <= qber <= 0.5:
        raise DomainError(f"QBER must lie in [0, 1/2], got {qber}")
    fec, clamped = fec_lookup(qber, cfg.fec_table)
    if clamped:
        log.debug("QBER %.4g outside the f_ec table; using the nearest endpoint", qber)
    return LeakEstimate(sift_len * fec * binary_entropy(qber) + cfg.hash_len, fec, clamped)


def source_intensities(scenario: Scenario) -> Tuple[GaussianParams, ...]:
    """Intensity laws the simulated detections are drawn from.

    The ideal-modulator mode simulates constant intensities; every other
    mode simulates the fluctuating source and differs only in the bounds.
    """
    ints = scenario.intensities
    if scenario.mode == "poissonian" or scenario.gain_model == "mean":
        return tuple(GaussianParams(p.mean, 0.0) for p in (ints.mu, ints.nu1, ints.nu2))
    return ints.mu, ints.nu1, ints.nu2


def intensity_models(scenario: Scenario) -> Tuple[IntensityModel, IntensityModel, IntensityModel]:
    """Photon-number models of ``(mu, nu1, nu2)`` implied by the scenario mode."""
    ints = scenario.intensities

    def mixed(p):
        return GaussianMixed(p) if p.sigma > 0 else Poissonian(p.mean)

    if scenario.mode in ("poissonian", "wang"):
        return Poissonian(ints.mu.mean), Poissonian(ints.nu1.mean), Poissonian(ints.nu2.mean)
    if scenario.mode == "gaussian-mixed":
        return mixed(ints.mu), mixed(ints.nu1), mixed(ints.nu2)
    return mixed(ints.mu), mixed(ints.nu1), VacuumOnly()


def _basis_estimate(scenario: Scenario, counts: Sequence[float],
                    gains: Sequence[float], budget: EpsilonBudget) -> BasisEstimate:
    rec = [db.GainRecord(n, n * q, budget.cfg.eps_bound) for n, q in zip(counts, gains)]
    q_mu, q_nu1, q_nu2 = (db.gain_bounds(r) for r in rec)
    # Five one-sided bounds enter per basis: mu upper, nu1 both, nu2 both.
    for _ in range(5):
        budget.take()
    mu, nu1, nu2 = intensity_models(scenario)
    ints = scenario.intensities
    if scenario.mode == "wang":
        y0 = db.poisson_yield_bounds(q_mu, q_nu1, q_nu2, ints.mu.mean, ints.nu1.mean,
                                     ints.nu2.mean).y0_lower
        q1 = db.wang_q1_lower_value(q_mu, q_nu1, q_nu2, ints.mu, ints.nu1, ints.nu2,
                                    z=scenario.wang_z)
        mu_hi = db.intensity_interval(ints.mu, scenario.wang_z).upper
        p1_hi = mu_hi * math.exp(-mu_hi)
        y1 = db.clamp_unit(q1.value / p1_hi)
        return BasisEstimate(q_mu, q_nu1, q_nu2, y0, y1.value, q1.value, y0, q1.raw / p1_hi)
    y0 = db.yield0_lower_value(q_nu1, q_nu2, nu1, nu2)
    y1 = db.yield1_lower_value(q_mu, q_nu1, q_nu2, mu, nu1, nu2, y0.value)
    q1 = photon_number_prob(1, mu) * y1.value
    return BasisEstimate(q_mu, q_nu1, q_nu2, y0.value, y1.value, q1, y0.raw, y1.raw)


def _coin_fidelity(source: PolarizationSource) -> Tuple[Optional[float], Optional[float]]:
    """Return ``(fidelity, delta)`` with exactly one of them set."""
    if isinstance(source, FixedDelta):
        if not 0 <= source.delta <= 0.5:
            raise DomainError("delta must lie in [0, 1/2]")
        return None, source.delta
    if isinstance(source, FixedFidelity):
        return source.fidelity, None
    rho_x, rho_y = basis_states(source)
    return fidelity(rho_x, rho_y), None


def secret_key_length(scenario: Scenario, distance_km: float) -> KeyLengthReport:
    """Secret key length at one distance.

    Bound-construction and solver failures do not raise: they yield a
    zero-length report with the error message recorded.
    """
    l_ver = scenario.protocol.sift_len_x
    try:
        return _secret_key_length(scenario, distance_km)
    except (db.InvalidBoundError, NumericalFailure) as exc:
        return KeyLengthReport(distance_km, 0.0, l_ver, error=f"{type(exc).__name__}: {exc}")


def _secret_key_length(scenario: Scenario, distance_km: float) -> KeyLengthReport:
    cfg, ch = scenario.protocol, scenario.channel
    ints = scenario.intensities
    budget = EpsilonBudget(cfg)
    flags = []

    gains, qbers = zip(*(channel_gain_qber(p, distance_km, ch)
                         for p in source_intensities(scenario)))
    counts = pulse_counts(cfg, gains[0])
    est_x = _basis_estimate(scenario, counts.n_x, gains, budget)
    est_y = _basis_estimate(scenario, counts.n_y, gains, budget)

    m1_x = single_photon_bits_lower(counts.l_ver_x, est_x.q1_lower, est_x.q_mu.upper,
                                    budget.take())
    m1_y = single_photon_bits_lower(counts.sift_len_y, est_y.q1_lower, est_y.q_mu.upper,
                                    budget.take())
    mu_model = intensity_models(scenario)[0]
    p0_mu = photon_number_prob(0, mu_model)
    m0_y = vacuum_error_bits_lower(counts.n_y[0], cfg, p0_mu, est_y.y0_lower, budget.take())
    eps_stat = budget.take()
    used = budget.close()

    base = dict(distance_km=distance_km, l_ver=counts.l_ver_x, gain_mu=gains[0],
                qber_mu=qbers[0], x=est_x, y=est_y, m1_x=m1_x, m1_y=m1_y, m0_y=m0_y,
                bounds_used=used)
    if m1_x <= 0 or m1_y <= 0:
        return KeyLengthReport(l_sec=0.0, flags=("no-single-photon-bits",), **base)

    e1_y = single_photon_bit_error_upper(counts.sift_len_y, qbers[0], m0_y, m1_y)
    f, delta = _coin_fidelity(scenario.polarization)
    if f is None:
        f = (1.0 - 2.0 * delta) ** 2
    coin = coin_imbalance(f, est_x.y1_lower, est_y.y1_lower)
    if coin.delta_prime_raw > 0.5:
        flags.append("delta-prime-clamped")
    theta_coin = coin_correction(e1_y, coin.delta_prime)
    e1_tilde = min(e1_y + theta_coin, 0.5)
    leak = leak_estimate(cfg.sift_len_x, qbers[0], cfg)
    if leak.clamped:
        flags.append("fec-clamped")
    base.update(e1_y=e1_y, delta=coin.delta, delta_prime=coin.delta_prime,
                theta_coin=theta_coin, e1_tilde=e1_tilde, leak=leak.bits, fec=leak.fec)
    if e1_tilde >= 0.5:
        flags.append("phase-error-saturated")
        return KeyLengthReport(l_sec=0.0, flags=tuple(flags), **base)

    theta_stat = statistical_correction(e1_tilde, m1_y, m1_x, eps_stat)
    e_phase = min(e1_tilde + theta_stat, 0.5)
    raw = (m1_x * (1.0 - binary_entropy(e_phase)) - leak.bits
           - 5.0 * math.log2(1.0 / cfg.eps_pa))
    return KeyLengthReport(l_sec=max(raw, 0.0), l_sec_raw=raw, theta_stat=theta_stat,
                           e_phase=e_phase, flags=tuple(flags), **base)


def sweep_distances(scenario: Scenario, distances: Iterable[float]) -> List[KeyLengthReport]:
    """One report per distance; failures are recorded per point."""
    distances = list(distances)
    if not distances:
        raise DomainError("distance list is empty")
    reports = []
    for d in distances:
        try:
            reports.append(secret_key_length(scenario, d))
        except Bb84FlawsError as exc:
            reports.append(KeyLengthReport(d, 0.0, scenario.protocol.sift_len_x,
                                           error=f"{type(exc).__name__}: {exc}"))
    return reports


def critical_distance(reports: Sequence[KeyLengthReport]) -> Optional[float]:
    """Largest swept distance with positive key, or None."""
    positive = [r.distance_km for r in reports if r.l_sec > 0]
    return max(positive) if positive else None


def distance_grid(start: float, stop: float, step: float) -> List[float]:
    """Inclusive grid ``start, start+step, ..., <= stop`` without float drift."""
    if step <= 0 or stop < start:
        raise DomainError("need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 10) for i in range(n + 1)]
