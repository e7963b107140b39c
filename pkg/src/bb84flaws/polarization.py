"""Polarization states, basis-averaged density matrices and the quantum coin.

Density matrices are plain ``(2, 2)`` complex numpy arrays in the ``{H, V}``
basis. Every constructor here runs :func:`check_density_matrix` on its
output.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InvariantViolation

DM_ATOL = 1e-12

# Nominal phase of each of the four states relative to the common offset.
NOMINAL_PHASES = (0.0, math.pi, 0.5 * math.pi, 1.5 * math.pi)


@dataclass(frozen=True)
class BlochAngles:
    phi: float
    theta: float
    degenerate_azimuth: bool = False

    def __post_init__(self):
        if not 0 <= self.phi < 2 * math.pi:
            raise DomainError(f"phi must lie in [0, 2pi), got {self.phi}")
        if not 0 <= self.theta <= math.pi:
            raise DomainError(f"theta must lie in [0, pi], got {self.theta}")


def check_density_matrix(rho: np.ndarray, atol: float = DM_ATOL) -> np.ndarray:
    """Raise :class:`InvariantViolation` unless ``rho`` is a valid qubit state."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise InvariantViolation(f"expected a 2x2 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvariantViolation("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise InvariantViolation("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise InvariantViolation(f"trace {np.trace(rho).real} differs from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -atol:
        raise InvariantViolation("density matrix has a negative eigenvalue")
    return rho


def bloch_projector(phi: float, theta: float) -> np.ndarray:
    """Projector onto ``cos(theta/2)|H> + exp(i phi) sin(theta/2)|V>``.

    ``phi`` may be any real number; the state is periodic in it.
    """
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    off = 0.5 * math.sin(theta) * complex(math.cos(phi), -math.sin(phi))
    rho = np.array([[c * c, off], [off.conjugate(), s * s]], dtype=complex)
    return check_density_matrix(rho)


def stokes_to_angles(s1: float, s2: float, s3: float) -> BlochAngles:
    """Bloch angles of a Stokes vector, with ``S1`` as the polar axis.

    The azimuth is measured in the ``(S2, S3)`` plane; on the poles it is
    undefined, reported as 0 and flagged.

    Raises:
        DomainError: for the zero vector.
    """
    norm = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
    if norm == 0 or not math.isfinite(norm):
        raise DomainError("Stokes vector must be finite and non-zero")
    theta = math.acos(min(max(s1 / norm, -1.0), 1.0))
    if s2 == 0 and s3 == 0:
        return BlochAngles(0.0, theta, degenerate_azimuth=True)
    return BlochAngles(float(np.mod(math.atan2(s3, s2), 2 * math.pi)), theta)


def stokes_to_angles_array(stokes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`stokes_to_angles` for an ``(n, 3)`` array."""
    stokes = np.asarray(stokes, dtype=float)
    norm = np.linalg.norm(stokes, axis=1)
    if np.any(norm == 0):
        raise DomainError("Stokes vector must be non-zero")
    theta = np.arccos(np.clip(stokes[:, 0] / norm, -1.0, 1.0))
    phi = np.mod(np.arctan2(stokes[:, 2], stokes[:, 1]), 2 * np.pi)
    return phi, theta


def wrap_to_branch(phi: np.ndarray, center: float) -> np.ndarray:
    """Map angles onto ``[center - pi, center + pi)``."""
    return center + np.mod(np.asarray(phi) - center + np.pi, 2 * np.pi) - np.pi


def unwrap_cluster(phi: np.ndarray) -> np.ndarray:
    """Put a cluster of azimuths on one continuous branch around its circular mean."""
    phi = np.asarray(phi, dtype=float)
    center = float(np.angle(np.mean(np.exp(1j * phi))))
    return wrap_to_branch(phi, center)


@dataclass(frozen=True)
class BinnedPdf:
    """Histogram density: ``density * widths`` sums to one."""

    edges: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        if len(self.edges) != len(self.density) + 1:
            raise DomainError("need one more edge than density values")
        total = float(np.sum(self.density * self.widths))
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"binned PDF integrates to {total}, not 1")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def mass(self) -> np.ndarray:
        return self.density * self.widths


@dataclass(frozen=True)
class BinnedAngular:
    """Per-state azimuth histograms plus one shared polar-angle histogram."""

    phi: Tuple[BinnedPdf, ...]
    theta: BinnedPdf


@dataclass(frozen=True)
class GaussianAngular:
    """Fitted angular parameters: per-state azimuth mean/sigma, shared polar mean/sigma."""

    phi_mean: Tuple[float, ...]
    phi_sigma: Tuple[float, ...]
    theta_mean: float
    theta_sigma: float

    def __post_init__(self):
        if len(self.phi_mean) != len(self.phi_sigma):
            raise DomainError("phi_mean and phi_sigma must have equal length")
        if min(self.phi_sigma) < 0 or self.theta_sigma < 0:
            raise DomainError("angular sigmas must be non-negative")


AngularDistribution = Union[BinnedAngular, GaussianAngular]


def _binned_state(phi_pdf: BinnedPdf, theta_pdf: BinnedPdf) -> np.ndarray:
    rho = np.zeros((2, 2), dtype=complex)
    for phi_c, wp in zip(phi_pdf.centers, phi_pdf.mass):
        for theta_c, wt in zip(theta_pdf.centers, theta_pdf.mass):
            if wp and wt:
                rho += wp * wt * bloch_projector(phi_c, theta_c)
    # Remove accumulated rounding so downstream checks see an exact trace.
    return rho / np.trace(rho).real


def gaussian_state(phi_mean: float, phi_sigma: float, theta_mean: float,
                   theta_sigma: float) -> np.ndarray:
    """Closed-form average of the projector over independent normal angles."""
    damp_theta = math.exp(-0.5 * theta_sigma ** 2)
    damp_off = math.exp(-0.5 * (phi_sigma ** 2 + theta_sigma ** 2))
    off = 0.5 * damp_off * math.sin(theta_mean) * complex(math.cos(phi_mean), -math.sin(phi_mean))
    rho = np.array([
        [0.5 * (1 + damp_theta * math.cos(theta_mean)), off],
        [off.conjugate(), 0.5 * (1 - damp_theta * math.cos(theta_mean))],
    ], dtype=complex)
    return check_density_matrix(rho)


def averaged_state(dist: AngularDistribution, state_index: int) -> np.ndarray:
    """Mixed state replacing the fluctuating pure state number ``state_index``.

    ``state_index`` counts from 1, matching the state labels of the data
    files: 1 and 2 form the first basis, 3 and 4 the second.
    """
    i = state_index - 1
    if isinstance(dist, BinnedAngular):
        if not 0 <= i < len(dist.phi):
            raise DomainError(f"no state {state_index}")
        return check_density_matrix(_binned_state(dist.phi[i], dist.theta))
    if isinstance(dist, GaussianAngular):
        if not 0 <= i < len(dist.phi_mean):
            raise DomainError(f"no state {state_index}")
        return gaussian_state(dist.phi_mean[i], dist.phi_sigma[i], dist.theta_mean,
                              dist.theta_sigma)
    raise DomainError(f"unsupported angular distribution {dist!r}")


def averaged_state_quadrature(phi_mean: float, phi_sigma: float, theta_mean: float,
                              theta_sigma: float) -> np.ndarray:
    """Numerical average with exactly normalized truncated normal laws.

    The azimuth is integrated over the branch ``phi_mean +- pi`` and the polar
    angle over ``[0, pi]``; both densities are renormalized on their domain.
    Used as the accuracy referee for :func:`gaussian_state`.
    """
    def expect(f, mean, sigma, lo, hi):
        if sigma == 0:
            return f(mean)
        pts = [mean] if lo < mean < hi else None
        num = integrate.quad(lambda x: f(x) * math.exp(-0.5 * ((x - mean) / sigma) ** 2),
                             lo, hi, points=pts, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        den = math.sqrt(2 * math.pi) * sigma * (
            special.ndtr((hi - mean) / sigma) - special.ndtr((lo - mean) / sigma))
        return num / den

    t_lo, t_hi = 0.0, math.pi
    p_lo, p_hi = phi_mean - math.pi, phi_mean + math.pi
    cos_t = expect(math.cos, theta_mean, theta_sigma, t_lo, t_hi)
    sin_t = expect(math.sin, theta_mean, theta_sigma, t_lo, t_hi)
    cos_p = expect(math.cos, phi_mean, phi_sigma, p_lo, p_hi)
    sin_p = expect(math.sin, phi_mean, phi_sigma, p_lo, p_hi)
    off = 0.5 * sin_t * complex(cos_p, -sin_p)
    rho = np.array([[0.5 * (1 + cos_t), off], [off.conjugate(), 0.5 * (1 - cos_t)]],
                   dtype=complex)
    return check_density_matrix(rho)


def basis_state(rho_a: np.ndarray, rho_b: np.ndarray) -> np.ndarray:
    """Equal mixture of the two states of one basis."""
    return check_density_matrix(0.5 * (np.asarray(rho_a) + np.asarray(rho_b)))


def basis_states(dist: AngularDistribution) -> Tuple[np.ndarray, np.ndarray]:
    states = [averaged_state(dist, i) for i in (1, 2, 3, 4)]
    return basis_state(states[0], states[1]), basis_state(states[2], states[3])


def _det2(rho):
    # Exact in rational arithmetic: near-pure states have determinants at the
    # round-off level, and the square root in the fidelity would amplify them.
    a, d = Fraction(float(rho[0, 0].real)), Fraction(float(rho[1, 1].real))
    b, c = complex(rho[0, 1]), complex(rho[1, 0])
    off = Fraction(b.real) * Fraction(c.real) - Fraction(b.imag) * Fraction(c.imag)
    return float(a * d - off)


def fidelity(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    """Squared-root fidelity of two qubit states via the 2x2 determinant identity.

    Raises:
        InvariantViolation: if either determinant is below ``-1e-12``.
    """
    det_a, det_b = _det2(rho_a), _det2(rho_b)
    if det_a < -DM_ATOL or det_b < -DM_ATOL:
        raise InvariantViolation("negative determinant: not a density matrix")
    overlap = float(np.trace(np.asarray(rho_a) @ np.asarray(rho_b)).real)
    f = overlap + 2.0 * math.sqrt(max(det_a, 0.0) * max(det_b, 0.0))
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True)
class CoinImbalance:
    delta: float
    delta_prime: float
    delta_prime_raw: float = field(default=None, compare=False)


def coin_imbalance(f: float, y1x_lower: float, y1y_lower: float) -> CoinImbalance:
    """Quantum-coin imbalance and its yield-rescaled effective value.

    Raises:
        DomainError: if ``f`` is outside [0, 1] or both yields are zero.
    """
    if not 0 <= f <= 1:
        raise DomainError(f"fidelity must lie in [0, 1], got {f}")
    if y1x_lower < 0 or y1y_lower < 0 or y1x_lower + y1y_lower == 0:
        raise DomainError("single-photon yields must be non-negative and not both zero")
    gap = 1.0 - math.sqrt(f)
    raw = gap / (y1x_lower + y1y_lower)
    return CoinImbalance(0.5 * gap, min(raw, 0.5), raw)


def coin_from_delta(delta: float, y1x_lower: float, y1y_lower: float) -> CoinImbalance:
    """Same as :func:`coin_imbalance` for a directly specified imbalance."""
    if not 0 <= delta <= 0.5:
        raise DomainError(f"imbalance must lie in [0, 1/2], got {delta}")
    return coin_imbalance((1.0 - 2.0 * delta) ** 2, y1x_lower, y1y_lower)


def pure_basis_fidelity(phi1, phi2, phi3, phi4, theta):
    """Fidelity of the two basis-averaged pure-state pairs sharing one polar angle.

    Accepts numpy arrays (broadcast).
    """
    s2 = np.sin(theta) ** 2
    b12 = 0.5 * (phi1 - phi2)
    b34 = 0.5 * (phi3 - phi4)
    total = 0.5 * (phi1 + phi2 - phi3 - phi4)
    return 0.5 * (1.0 + np.cos(theta) ** 2
                  + np.cos(total) * np.cos(b12) * np.cos(b34) * s2
                  + np.abs(np.sin(b12) * np.sin(b34)) * s2)


def _closest_to_half_pi(theta_range):
    lo, hi = theta_range
    return min(max(0.5 * math.pi, lo), hi)


def min_fidelity_pure(phi_ranges: Sequence[Tuple[float, float]],
                      theta_range: Tuple[float, float], grid_points: int = 64) -> float:
    """Smallest fidelity between the bases over boxes of pure-state angles.

    Evaluates the four extreme azimuth combinations and a dense grid of
    ``grid_points`` per azimuth; the fidelity decreases with ``sin(theta)^2``
    at fixed azimuths, so the polar angle is fixed at the admissible value
    nearest to ``pi/2``.
    """
    if len(phi_ranges) != 4:
        raise DomainError("need azimuth ranges for four states")
    for lo, hi in list(phi_ranges) + [tuple(theta_range)]:
        if not lo <= hi:
            raise DomainError(f"empty interval [{lo}, {hi}]")
    if not 0 <= theta_range[0] <= theta_range[1] <= math.pi:
        raise DomainError("theta range must lie inside [0, pi]")
    theta = _closest_to_half_pi(theta_range)
    (a1, b1), (a2, b2), (a3, b3), (a4, b4) = phi_ranges

    candidates = []
    for (p1, p2), (p3, p4) in itertools.product(((a1, b2), (b1, a2)), ((a3, b4), (b3, a4))):
        candidates.append(float(pure_basis_fidelity(p1, p2, p3, p4, theta)))
    best = min(candidates)

    g1, g2, g3, g4 = (np.linspace(lo, hi, grid_points) for lo, hi in phi_ranges)
    x1, x2 = np.meshgrid(g1, g2, indexing="ij")
    x1, x2 = x1.ravel(), x2.ravel()
    y3, y4 = np.meshgrid(g3, g4, indexing="ij")
    y3, y4 = y3.ravel()[None, :], y4.ravel()[None, :]
    chunk = 256
    for start in range(0, x1.size, chunk):
        f = pure_basis_fidelity(x1[start:start + chunk, None], x2[start:start + chunk, None],
                                y3, y4, theta)
        best = min(best, float(f.min()))
    return min(max(best, 0.0), 1.0)
