import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from toftomo.constants import RB87_MASS, TRAP_FREQ_N1_HZ
from toftomo.dynamics import quadrature_distribution
from toftomo.fock import OscillatorSpec
from toftomo.quadrature import QuadratureDataset

settings.register_profile(
    "toftomo",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("toftomo")


@pytest.fixture
def spec():
    return OscillatorSpec.from_frequency(RB87_MASS, TRAP_FREQ_N1_HZ)


def random_density(dim, rank=None, seed=0, support=None):
    """Random density matrix of ``dim`` levels with populations only below ``support``."""
    rng = np.random.default_rng(seed)
    support = dim if support is None else support
    rank = support if rank is None else rank
    g = rng.normal(size=(support, rank)) + 1j * rng.normal(size=(support, rank))
    small = g @ g.conj().T
    small /= np.trace(small).real
    rho = np.zeros((dim, dim), dtype=complex)
    rho[:support, :support] = small
    return rho


def exact_dataset(rho, angles, u_grid):
    """Noiseless binned quadrature data of ``rho`` on a shared grid."""
    table = np.array([quadrature_distribution(rho, th, u_grid) for th in angles])
    return QuadratureDataset.from_distributions(angles, u_grid, table)
