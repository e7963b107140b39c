import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from bb84flaws import polarization as pol
from bb84flaws.errors import DomainError, InvariantViolation

H = np.diag([1.0, 0.0]).astype(complex)
V = np.diag([0.0, 1.0]).astype(complex)
IDEAL = (0.0, math.pi, 0.5 * math.pi, 1.5 * math.pi)


def bloch_state(r):
    x, y, z = r
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


bloch_vectors = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).map(
    lambda v: np.array(v) / max(1.0, float(np.linalg.norm(v))))


def mp_fidelity(a, b):
    # Uhlmann fidelity of the exact float entries, eigendecomposition at 50 digits.
    with mpmath.workdps(50):
        ma = mpmath.matrix([[mpmath.mpc(complex(x)) for x in row] for row in a])
        mb = mpmath.matrix([[mpmath.mpc(complex(x)) for x in row] for row in b])
        w, u = mpmath.eighe(ma)
        sa = u * mpmath.diag([mpmath.sqrt(max(x, 0)) for x in w]) * u.H
        ev = mpmath.eighe(sa * mb * sa, eigvals_only=True)
        return float(sum(mpmath.sqrt(max(x, 0)) for x in ev) ** 2)


def eig_fidelity(a, b):
    # Uhlmann fidelity through eigendecompositions only.
    w, u = np.linalg.eigh(a)
    sa = (u * np.sqrt(np.clip(w, 0, None))) @ u.conj().T
    m = sa @ b @ sa
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    # Round-off eigenvalues of a rank-deficient product would leak through the root.
    ev = np.where(ev > 1e-13 * max(ev.max(), 1e-300), ev, 0.0)
    return float(np.sum(np.sqrt(ev)) ** 2)


def assert_density(rho):
    pol.check_density_matrix(rho, atol=1e-12)


def test_projector_examples():
    np.testing.assert_allclose(pol.bloch_projector(0.0, 0.0), H, atol=1e-15)
    np.testing.assert_allclose(pol.bloch_projector(0.0, 0.5 * math.pi),
                               0.5 * np.ones((2, 2)), atol=1e-15)
    np.testing.assert_allclose(pol.bloch_projector(0.5 * math.pi, 0.5 * math.pi),
                               0.5 * np.array([[1, -1j], [1j, 1]]), atol=1e-15)


@given(st.floats(-10, 10), st.floats(0, math.pi))
def test_projector_idempotent(phi, theta):
    p = pol.bloch_projector(phi, theta)
    assert_density(p)
    np.testing.assert_allclose(p @ p, p, atol=1e-12)


def test_stokes_examples():
    a = pol.stokes_to_angles(0, 1, 0)
    assert (a.phi, a.theta, a.degenerate_azimuth) == (0.0, pytest.approx(0.5 * math.pi), False)
    a = pol.stokes_to_angles(0, 0, 1)
    assert a.phi == pytest.approx(0.5 * math.pi) and a.theta == pytest.approx(0.5 * math.pi)
    a = pol.stokes_to_angles(1, 0, 0)
    assert a.theta == 0.0 and a.degenerate_azimuth
    with pytest.raises(DomainError):
        pol.stokes_to_angles(0, 0, 0)


@given(st.floats(0.01, math.pi - 0.01), st.floats(0, 2 * math.pi - 1e-9), st.floats(0.1, 10))
def test_stokes_round_trip(theta, phi, norm):
    s = norm * np.array([math.cos(theta), math.sin(theta) * math.cos(phi),
                         math.sin(theta) * math.sin(phi)])
    a = pol.stokes_to_angles(*s)
    assert a.theta == pytest.approx(theta, abs=1e-9)
    assert math.remainder(a.phi - phi, 2 * math.pi) == pytest.approx(0, abs=1e-9)
    p, t = pol.stokes_to_angles_array(s[None, :])
    assert p[0] == pytest.approx(a.phi) and t[0] == pytest.approx(a.theta)


def test_unwrap_cluster_straddling_zero():
    phi = np.mod(np.array([-0.1, -0.05, 0.0, 0.05, 0.1]), 2 * math.pi)
    np.testing.assert_allclose(pol.unwrap_cluster(phi), [-0.1, -0.05, 0.0, 0.05, 0.1], atol=1e-12)


def test_gaussian_pure_limit():
    np.testing.assert_allclose(pol.gaussian_state(0.0, 0.0, 0.5 * math.pi, 0.0),
                               0.5 * np.ones((2, 2)), atol=1e-15)


def test_gaussian_offdiagonal_example():
    rho = pol.gaussian_state(math.pi / 3, 0.05, 0.5 * math.pi, 0.03)
    assert abs(rho[0, 1]) == pytest.approx(0.499151, abs=5e-7)
    ref = pol.averaged_state_quadrature(math.pi / 3, 0.05, 0.5 * math.pi, 0.03)
    assert abs(ref[0, 1]) == pytest.approx(0.499151, abs=5e-7)
    np.testing.assert_allclose(rho, ref, atol=1e-6)


@pytest.mark.parametrize("phi_sigma,theta_sigma", list(itertools.product(
    (0.0, 0.01, 0.1, 0.3), (0.0, 0.01, 0.1, 0.3))))
@pytest.mark.parametrize("phi_mean,theta_mean", [(0.0, 0.5 * math.pi), (1.0, 0.5 * math.pi + 0.1),
                                                 (math.pi / 3, 0.5 * math.pi - 0.02)])
def test_gaussian_matches_quadrature(phi_mean, theta_mean, phi_sigma, theta_sigma):
    rho = pol.gaussian_state(phi_mean, phi_sigma, theta_mean, theta_sigma)
    ref = pol.averaged_state_quadrature(phi_mean, phi_sigma, theta_mean, theta_sigma)
    assert_density(rho)
    np.testing.assert_allclose(rho, ref, atol=1e-6, rtol=0)


def test_single_bin_equals_projector():
    phi = pol.BinnedPdf(np.array([0.9, 1.1]), np.array([5.0]))
    theta = pol.BinnedPdf(np.array([1.5, 1.7]), np.array([5.0]))
    rho = pol.averaged_state(pol.BinnedAngular((phi,) * 4, theta), 2)
    np.testing.assert_allclose(rho, pol.bloch_projector(1.0, 1.6), atol=1e-15)


def test_binned_pdf_normalization_checked():
    with pytest.raises(DomainError):
        pol.BinnedPdf(np.array([0.0, 1.0, 2.0]), np.array([0.3, 0.3]))


def test_averaged_state_index():
    dist = pol.GaussianAngular(IDEAL, (0.0,) * 4, 0.5 * math.pi, 0.0)
    with pytest.raises(DomainError):
        pol.averaged_state(dist, 0)
    with pytest.raises(DomainError):
        pol.averaged_state(dist, 5)


def test_basis_state_examples():
    np.testing.assert_allclose(pol.basis_state(H, V), 0.5 * np.eye(2))
    rho = bloch_state([0.3, 0.2, 0.1])
    np.testing.assert_allclose(pol.basis_state(rho, rho), rho)


def test_density_check_rejects():
    with pytest.raises(InvariantViolation):
        pol.check_density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(InvariantViolation):
        pol.check_density_matrix(np.eye(2))
    with pytest.raises(InvariantViolation):
        pol.check_density_matrix(np.array([[1.1, 0], [0, -0.1]]))


def test_fidelity_examples():
    d = pol.bloch_projector(0.4, 1.0)
    assert pol.fidelity(d, d) == pytest.approx(1.0, abs=1e-12)
    assert pol.fidelity(H, V) == 0.0
    assert pol.fidelity(0.5 * np.eye(2), d) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_rejects_negative_determinant():
    bad = np.array([[1.2, 0], [0, -0.2]])
    with pytest.raises(InvariantViolation):
        pol.fidelity(bad, H)


@given(bloch_vectors, bloch_vectors)
def test_fidelity_matches_eigendecomposition(ra, rb):
    a, b = bloch_state(ra), bloch_state(rb)
    f = pol.fidelity(a, b)
    assert 0 <= f <= 1
    assert f == pytest.approx(pol.fidelity(b, a), abs=1e-15)
    assert f == pytest.approx(mp_fidelity(a, b), abs=1e-10)


@given(bloch_vectors)
def test_fidelity_one_iff_equal(r):
    a = bloch_state(r)
    assert pol.fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    other = bloch_state(-r if np.linalg.norm(r) > 0.1 else np.array([0.5, 0, 0]))
    assert pol.fidelity(a, other) < 1 - 1e-4


@given(st.floats(-math.pi, math.pi), st.floats(0.01, 0.3), st.floats(0, 0.1))
def test_perfect_preparation_and_rotation(phi0, phi_sigma, theta_sigma):
    ideal = pol.GaussianAngular(tuple(phi0 + p for p in IDEAL), (0.0,) * 4, 0.5 * math.pi, 0.0)
    x, y = pol.basis_states(ideal)
    np.testing.assert_allclose(x, y, atol=1e-12)
    assert pol.coin_imbalance(pol.fidelity(x, y), 0.5, 0.5).delta == pytest.approx(0, abs=1e-12)
    skew = (0.0, 0.05, -0.03, 0.02)
    f = [pol.fidelity(*pol.basis_states(pol.GaussianAngular(
        tuple(off + p + s for p, s in zip(IDEAL, skew)), (phi_sigma,) * 4,
        0.5 * math.pi - 0.02, theta_sigma))) for off in (0.0, phi0)]
    assert f[0] == pytest.approx(f[1], abs=1e-12)


def test_coin_examples():
    c = pol.coin_imbalance(1.0, 0.04, 0.04)
    assert (c.delta, c.delta_prime) == (0.0, 0.0)
    c = pol.coin_imbalance(0.9975, 0.04, 0.04)
    exact = (1 - math.sqrt(0.9975)) / 2
    assert c.delta == pytest.approx(exact, rel=1e-14)
    assert round(c.delta, 4) == 6e-4
    assert c.delta_prime == pytest.approx(2 * exact / 0.08, rel=1e-12)
    with pytest.raises(DomainError):
        pol.coin_imbalance(0.9, 0.0, 0.0)
    with pytest.raises(DomainError):
        pol.coin_imbalance(1.2, 0.1, 0.1)


def test_coin_clamped():
    c = pol.coin_imbalance(0.5, 1e-3, 1e-3)
    assert c.delta_prime == 0.5 and c.delta_prime_raw > 0.5


@given(st.floats(0, 0.5), st.floats(1e-4, 1), st.floats(1e-4, 1))
def test_coin_invariants(delta, yx, yy):
    c = pol.coin_from_delta(delta, yx, yy)
    assert c.delta == pytest.approx(delta, abs=1e-12)
    assert 0 <= c.delta_prime <= 0.5
    assert c.delta_prime >= c.delta - 1e-15


def test_min_fidelity_ideal():
    ranges = [(p, p) for p in IDEAL]
    theta = (0.5 * math.pi, 0.5 * math.pi)
    assert pol.min_fidelity_pure(ranges, theta) == pytest.approx(1.0, abs=1e-12)


def test_min_fidelity_rejects():
    with pytest.raises(DomainError):
        pol.min_fidelity_pure([(0, 1)] * 3, (1, 2))
    with pytest.raises(DomainError):
        pol.min_fidelity_pure([(1, 0)] * 4, (1, 2))
    with pytest.raises(DomainError):
        pol.min_fidelity_pure([(0, 1)] * 4, (-0.1, 2))


def test_pure_objective_matches_state_fidelity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        phis = np.array(IDEAL) + rng.normal(0, 0.2, 4)
        theta = rng.uniform(0.3, 2.8)
        x, y = (pol.basis_state(pol.bloch_projector(phis[i], theta),
                                pol.bloch_projector(phis[i + 1], theta)) for i in (0, 2))
        assert pol.pure_basis_fidelity(*phis, theta) == pytest.approx(
            eig_fidelity(x, y), abs=1e-9)


def _oracle_min(ranges, theta_range, starts=200, seed=0):
    rng = np.random.default_rng(seed)
    bounds = list(ranges) + [theta_range]

    def f(v):
        return float(pol.pure_basis_fidelity(*v))

    best = math.inf
    for _ in range(starts):
        x0 = [rng.uniform(lo, hi) for lo, hi in bounds]
        res = optimize.minimize(f, x0, method="L-BFGS-B", bounds=bounds)
        best = min(best, res.fun)
    for corner in itertools.product(*bounds):
        best = min(best, f(corner))
    return best


def test_min_fidelity_symmetric_example():
    ranges = [(p - 0.05, p + 0.05) for p in IDEAL]
    theta = (0.5 * math.pi - 0.02, 0.5 * math.pi + 0.02)
    got = pol.min_fidelity_pure(ranges, theta)
    assert got == pytest.approx(_oracle_min(ranges, theta), abs=1e-10)
    assert got == pytest.approx(0.998751, abs=1e-6)


def test_min_fidelity_random_boxes():
    rng = np.random.default_rng(11)
    for _ in range(5):
        centers = np.array(IDEAL) + rng.normal(0, 0.05, 4)
        half = rng.uniform(0.0, 0.15, 4)
        ranges = [(c - h, c + h) for c, h in zip(centers, half)]
        t = rng.uniform(1.2, 1.9)
        theta = (t, t + rng.uniform(0, 0.1))
        got = pol.min_fidelity_pure(ranges, theta, grid_points=16)
        assert got <= _oracle_min(ranges, theta, starts=30) + 1e-9
        samples = [rng.uniform(lo, hi, 20000) for lo, hi in ranges + [theta]]
        assert got <= float(np.min(pol.pure_basis_fidelity(*samples))) + 1e-12
