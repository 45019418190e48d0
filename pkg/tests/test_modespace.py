import numpy as np
import pytest
from hypothesis import given, strategies as st

from blochlimit import potential as pot, modespace as ms


def l2(a, b):
    return np.sqrt(np.sum(np.abs(a.values - b.values) ** 2) * a.dx)


@pytest.fixture(scope="module")
def setup():
    V = pot.mathieu5()
    L, eps = 8.0, 0.125
    return V, L, eps, ms.dual_fibers(V, L, eps)


def test_grid_rules():
    assert ms.fast_periods(16, 0.125) == 128
    assert ms.default_points(16, 0.125) == 1024
    with pytest.raises(ms.GridError):
        ms.fast_periods(1.0, 0.3)
    with pytest.raises(ms.GridError):
        ms.make_field(4.0, 0.25, N=96)            # not a power of two
    with pytest.raises(ms.GridError):
        ms.make_field(4.0, 0.25, N=64)            # dx > eps/8


def test_cutoff_beyond_grid():
    with pytest.raises(ms.GridError):
        ms.dual_fibers(pot.mathieu5(), 4.0, 0.25, 128, K=10)


def test_round_trip_and_parseval(setup):
    V, L, eps, fib = setup
    psi = ms.packet(L, eps, 0.4, 0.2, 0.5)
    m = ms.decompose(psi, fib)
    assert l2(ms.recompose(m), psi) < 1e-12
    assert m.mode_norms2().sum() + m.tail == pytest.approx(psi.norm2(), rel=1e-12)


def test_free_first_mode_is_first_cell():
    # for V = 0 the lowest mode at reduced zeta is the plane wave in the cell |eps xi| < pi
    L, eps = 8.0, 0.25
    fib = ms.dual_fibers(pot.free(), L, eps)
    psi = ms.packet(L, eps, 2.0, 0.0, 0.5)
    u1 = ms.recompose(ms.decompose(psi, fib), [1])
    ref = ms.frequency_filter(psi, lambda z: (z >= -np.pi) & (z < np.pi))
    assert l2(u1, ref) < 1e-12


def test_gauge_invariance(setup, rng):
    V, L, eps, fib = setup
    psi = ms.packet(L, eps, 1.0, 0.0, 1.0)
    a = ms.recompose(ms.decompose(psi, fib), [2])
    b = ms.recompose(ms.decompose(psi, fib.regauged(rng)), [2])
    assert l2(a, b) < 1e-12


def test_mode_pure_data(setup, rng):
    V, L, eps, fib = setup
    b = rng.normal(size=(1, fib.M)) + 1j * rng.normal(size=(1, fib.M))
    mc = ms.modes_from_amplitudes(b, fib, L, eps)
    psi = ms.recompose(mc)
    m = ms.decompose(psi, fib)
    assert np.allclose(m.b[0], b[0], atol=1e-10)
    assert np.max(np.abs(m.b[1:])) < 1e-10


def test_norms(setup):
    V, L, eps, fib = setup
    psi = ms.packet(L, eps, 0.0, 0.0, 1.0)
    assert ms.hs_eps_norm(psi, 0) == pytest.approx(psi.norm2(), rel=1e-12)
    assert ms.hs_eps_norm(psi, 1) > psi.norm2()
    tail = ms.eps_oscillation_profile(psi, [0.0, 1.0, 10.0])
    assert np.all(np.diff(tail) <= 0) and tail[-1] < 1e-10


def test_field_io(tmp_path):
    psi = ms.packet(4.0, 0.25, 1.0, 0.0, 0.5)
    ms.write_field(tmp_path / "f", psi)
    back = ms.read_field(tmp_path / "f.bin")
    assert (back.L, back.eps, back.N) == (psi.L, psi.eps, psi.N)
    assert np.max(np.abs(back.values - psi.values)) < 1e-6


def test_wrong_grid_rejected(setup):
    V, L, eps, fib = setup
    with pytest.raises(ms.GridError):
        ms.decompose(ms.packet(L, eps, N=2048), fib)


@given(st.floats(-2.5, 2.5), st.floats(-0.5, 0.5), st.floats(0.3, 0.6))
def test_tail_monotone(xi0, x0, sigma):
    # widths keep the Gaussian periodic on the box to well below the tolerance
    V, L, eps = pot.mathieu5(), 8.0, 0.25
    fib = ms.dual_fibers(V, L, eps)
    psi = ms.packet(L, eps, xi0, x0, sigma)
    t = [ms.tail_norm(psi, fib, n) for n in range(1, fib.n_modes + 1)]
    assert np.all(np.diff(t) <= 1e-13)
    assert t[-1] < 1e-6
