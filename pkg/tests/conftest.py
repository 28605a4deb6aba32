import numpy as np
import pytest

from sidlab.basis import BasisIndex, SpectralFunction
from sidlab.measures import (
    DiffusionPotentialKernel,
    TranslationInvariantKernel,
    uniform_measure,
)

K_TEST = 16


@pytest.fixture(scope="session")
def K():
    return K_TEST


@pytest.fixture(scope="session")
def lam(K):
    return uniform_measure(K)


@pytest.fixture(scope="session")
def c1(K):
    return SpectralFunction.unit(K, BasisIndex("cosine", 1))


@pytest.fixture(scope="session")
def s1(K):
    return SpectralFunction.unit(K, BasisIndex("sine", 1))


@pytest.fixture(scope="session")
def c2(K):
    return SpectralFunction.unit(K, BasisIndex("cosine", 2))


@pytest.fixture(scope="session")
def kernel_zero():
    return TranslationInvariantKernel({})


@pytest.fixture(scope="session")
def kernel_a1():
    return TranslationInvariantKernel({1: 1.0})


@pytest.fixture(scope="session")
def kernel_a1_a2():
    return TranslationInvariantKernel({1: 1.0, 2: 0.5})


@pytest.fixture(scope="session")
def kernel_diffusion(K):
    v = 0.8 * SpectralFunction.unit(K, BasisIndex("cosine", 1))
    return DiffusionPotentialKernel(v)


def random_band_limited(rng: np.random.Generator, K: int, max_degree: int | None = None,
                        scale: float = 1.0) -> SpectralFunction:
    """Random function with modes up to max_degree (default K/2)."""
    deg = max_degree if max_degree is not None else K // 2
    coeffs = np.zeros(2 * K + 1)
    coeffs[: 2 * deg + 1] = scale * rng.standard_normal(2 * deg + 1)
    return SpectralFunction(K, coeffs)


def quadrature_inner(f_values: np.ndarray, g_values: np.ndarray) -> float:
    """Trapezoid inner product on the uniform grid against d(theta)/2pi."""
    return float(np.mean(f_values * g_values))
