import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adleg import kernels
from adleg.legendre import log_adams_table


def test_fallback_always_available():
    assert "python" in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=12),
       st.lists(st.tuples(st.integers(2, 80), st.integers(2, 80)), min_size=1, max_size=30))
def test_backends_agree(coef, pairs):
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    la = log_adams_table(200)
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    np.testing.assert_allclose(cy.diffusion_entries(rows, cols, coef, la),
                               py.diffusion_entries(rows, cols, coef, la), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(cy.reaction_entries(rows, cols, coef, la),
                               py.reaction_entries(rows, cols, coef, la), rtol=1e-13, atol=1e-15)


def test_symmetric_in_index_pair(backend):
    la = log_adams_table(100)
    rows = np.arange(2, 30)
    cols = rows[::-1].copy()
    c = np.exp(-np.arange(8.0))
    np.testing.assert_allclose(kernels.diffusion_entries(rows, cols, c, la),
                               kernels.diffusion_entries(cols, rows, c, la), rtol=1e-12)
    np.testing.assert_allclose(kernels.reaction_entries(rows, cols, c, la),
                               kernels.reaction_entries(cols, rows, c, la), rtol=1e-12)
