import numpy as np
import pytest

from degenhyp.reduction import ScalarOperator
from degenhyp.weights import DegeneracySpec, smooth_cutoff


@pytest.fixture(scope="session")
def spec1():
    return DegeneracySpec(l_star=1, T=1.0)


@pytest.fixture(scope="session")
def spec2():
    return DegeneracySpec(l_star=2, T=1.0)


@pytest.fixture(scope="session")
def cut():
    return smooth_cutoff()


def random_hyperbolic_operator(rng, m, spec, complex_q=True):
    """Strictly hyperbolic random operator: roots with gaps >= 0.5, random q."""
    gaps = rng.uniform(0.5, 1.5, size=m)
    roots = np.cumsum(gaps) - gaps.sum() / 2 + rng.uniform(-0.5, 0.5)
    p_full = np.poly(roots)  # descending, monic
    p_low = p_full[::-1][:m]  # ascending p_0..p_{m-1}
    coeffs = {}
    for j in range(m):
        if p_low[j] != 0.0:
            coeffs[(j, m - j)] = complex(p_low[j])
    for j in range(m - 1):
        val = rng.normal() + (1j * rng.normal() if complex_q else 0.0)
        coeffs[(j, m - j - 1)] = val
    # deeper term with no effect on p or q
    coeffs[(0, 0)] = complex(rng.normal())
    return ScalarOperator(m=m, spec=spec, coeffs=coeffs)
