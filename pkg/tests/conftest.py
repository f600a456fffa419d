import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import cmenet as cm


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure steady state."""
    fac = cm.gen_factors(cm.LatentModelSpec(20, 4, 0.0, 0))
    design = cm.build_cme_design(fac)
    y = np.arange(20, dtype=float)
    cm.fit(design, y, cm.PenaltyParams(0.5, 0.5, 3.0, 0.05))
    cm.threshold(1.0, 1.0, 0.5, 3.0, 1.0, 0.5)


def random_instance(rng, n=None, p=None, rho=None, n_active=2, noise_sd=1.0, coef=1.0):
    """A seeded data set with a sparse truth over random CME columns."""
    n = n or int(rng.integers(30, 120))
    p = p or int(rng.integers(4, 12))
    rho = rho if rho is not None else float(rng.uniform(0.0, 0.6))
    fac = cm.gen_factors(cm.LatentModelSpec(n, p, rho, int(rng.integers(1 << 30))))
    design = cm.build_cme_design(fac)
    cols = rng.choice(design.p_prime, size=min(n_active, design.p_prime), replace=False)
    beta = np.zeros(design.p_prime)
    beta[cols] = coef * rng.choice([-1.0, 1.0], size=cols.size)
    y = design.columns @ beta + noise_sd * rng.standard_normal(n)
    return design, y, beta


def random_params(rng, scale=1.0):
    """Valid PenaltyParams with tau + 1/gamma < 1/2."""
    gamma = float(rng.uniform(2.4, 9.0))
    tau = float(rng.uniform(0.005, 0.49 - 1.0 / gamma))
    lam_s = float(scale * rng.uniform(0.02, 0.5))
    lam_c = float(scale * rng.uniform(0.02, 0.5))
    return cm.PenaltyParams(lam_s, lam_c, gamma, tau)
