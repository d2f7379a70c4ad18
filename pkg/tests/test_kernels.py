import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blindofdm import _kernels


@pytest.fixture
def restore_backend():
    prev = _kernels.backend()
    yield
    _kernels.set_backend(prev)


def _both(fn, *args):
    out = {}
    for name in ("numba", "numpy"):
        _kernels.set_backend(name)
        out[name] = fn(*args)
    return out["numba"], out["numpy"]


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")
class TestBackendsAgree:
    @given(st.integers(1, 4), st.integers(0, 3), st.integers(1, 6), st.integers(0, 10**6))
    def test_bem_taps(self, n_sym, q_half, n_lag, seed):
        r = np.random.default_rng(seed)
        coeffs = r.standard_normal((n_sym, 2 * q_half + 1, n_lag)) + 1j * r.standard_normal((n_sym, 2 * q_half + 1, n_lag))
        idx = r.integers(0, 10**7, n_sym)
        prev = _kernels.backend()
        try:
            a, b = _both(_kernels.bem_taps, coeffs, idx, 42, -10, 42)
        finally:
            _kernels.set_backend(prev)
        assert_allclose(a, b, atol=1e-12)

    @given(st.integers(1, 3), st.integers(1, 20), st.integers(1, 8), st.integers(0, 10**6))
    def test_pseudo_circulant_and_convolution(self, n_sym, n, n_lag, seed):
        r = np.random.default_rng(seed)
        taps = r.standard_normal((n_sym, n, n_lag)) + 1j * r.standard_normal((n_sym, n, n_lag))
        sig = r.standard_normal((n_sym, n)) + 0j
        prev = _kernels.backend()
        try:
            a, b = _both(_kernels.pseudo_circulant, taps)
            assert_array_equal(a, b)
            a, b = _both(_kernels.ltv_convolve, sig, taps)
        finally:
            _kernels.set_backend(prev)
        assert_allclose(a, b, atol=1e-12)


def test_backend_switch(restore_backend):
    assert _kernels.set_backend("numpy") in ("numba", "numpy")
    assert _kernels.backend() == "numpy"
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_env_flag_parsing():
    assert not _kernels._flag_enabled("0")
    assert not _kernels._flag_enabled("off")
    assert _kernels._flag_enabled("1")


def test_convolution_shape_checked():
    with pytest.raises(ValueError):
        _kernels.ltv_convolve(np.ones((1, 5)), np.ones((1, 4, 2)))
