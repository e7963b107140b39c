from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
SYNTHETIC = ROOT / "data" / "synthetic"
SCENARIOS = ROOT / "data" / "scenarios"

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def intensity_csv():
    return SYNTHETIC / "intensity.csv"


@pytest.fixture(scope="session")
def stokes_csv():
    return SYNTHETIC / "stokes.csv"


def planted_channel(rng):
    """Random intensities, photon-number models and yields ``Y_n`` with exact gains.

    Returns ``(params, models, yields, gains)`` where ``params`` are the
    ``(mu, nu1, nu2)`` normal laws, ``models`` the matching photon-number
    models and ``gains`` the exact gains ``sum_n P_n Y_n``.
    """
    from bb84flaws.photon_stats import (
        GaussianParams,
        Poissonian,
        gaussian_mixed,
        photon_number_distribution,
    )

    mu = rng.uniform(0.2, 0.6)
    nu1 = rng.uniform(0.05, 0.4) * mu
    nu2 = rng.choice([0.0, rng.uniform(0.0, 0.2) * nu1])
    rel = rng.choice([0.0, rng.uniform(0.001, 0.1)])
    params = tuple(GaussianParams(m, rel * m) for m in (mu, nu1, nu2))
    models = tuple(gaussian_mixed(p.mean, p.sigma) if p.sigma > 0 else Poissonian(p.mean)
                   for p in params)
    kind = rng.integers(3)
    n = np.arange(61)
    if kind == 0:
        eta = 10 ** rng.uniform(-4, 0)
        yields = 1 - (1 - eta) ** n + rng.uniform(0, 1e-3)
    elif kind == 1:
        yields = rng.uniform(0, 1, 61)
    else:
        yields = np.sort(rng.uniform(0, 1, 61))[::-1]
    yields = np.clip(yields, 0, 1)
    gains = tuple(float(np.dot(photon_number_distribution(m, 60), yields)) for m in models)
    return params, models, yields, gains


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
