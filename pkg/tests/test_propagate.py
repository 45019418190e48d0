import numpy as np
import pytest
import scipy.fft as sfft
from scipy.linalg import expm
from hypothesis import given, strategies as st

from blochlimit import potential as pot, modespace as ms, propagate as prop

L, EPS = 4.0, 0.25


def l2(u, v, dx):
    return np.sqrt(np.sum(np.abs(u - v) ** 2) * dx)


def dense_reference(psi, V, vext, T):
    """exp(-i T H) psi with H = -1/2 d_xx + V(x/eps)/eps^2 + V_ext as a dense matrix."""
    N = psi.N
    k = 2 * np.pi * sfft.fftfreq(N, psi.dx)
    F = sfft.fft(np.eye(N), axis=0)
    H = np.real(sfft.ifft(0.5 * k[:, None] ** 2 * F, axis=0))
    pot_x = V(psi.x / psi.eps) / psi.eps ** 2 + (0 if vext is None else vext(0, psi.x))
    H = H + np.diag(pot_x)
    return expm(-1j * T * H) @ psi.values


def run(psi, V, scheme, dt, T, vext=None):
    return prop.evolve(psi, prop.EvolutionConfig(psi.eps, T, dt, scheme, V, vext))


def test_free_exact():
    psi = ms.packet(L, EPS, 0.5, 0.0, 0.3, N=256)
    k = 2 * np.pi * sfft.fftfreq(psi.N, psi.dx)
    T = 0.3
    exact = sfft.ifft(np.exp(-0.5j * T * k ** 2) * sfft.fft(psi.values))
    for scheme, dt in (("bloch_strang", 0.3), ("fourier_split", 0.1 * EPS ** 2 / 2)):
        r = run(psi, pot.free(), scheme, dt, T)
        assert l2(r.field.values, exact, psi.dx) < 1e-10


def test_periodic_part_exact_against_dense():
    psi = ms.packet(L, EPS, 0.0, 0.0, 0.3, N=256)
    V = pot.mathieu5()
    ref = dense_reference(psi, V, None, 0.05)
    r = run(psi, V, "bloch_strang", 0.05, 0.05)      # one step: no splitting error without V_ext
    assert l2(r.field.values, ref, psi.dx) < 1e-8


def test_with_external_potential_against_dense():
    psi = ms.packet(L, EPS, 0.0, 0.0, 0.3, N=256)
    V = pot.mathieu5()
    vext = lambda t, x: 0.5 * np.exp(-x ** 2 / 2)
    ref = dense_reference(psi, V, vext, 0.05)
    r = run(psi, V, "bloch_strang", 1e-3, 0.05, vext)
    assert l2(r.field.values, ref, psi.dx) < 1e-6


def test_observables_and_density():
    psi = ms.packet(L, EPS, 0.0, 0.0, 0.3, N=256)
    phi = np.exp(-psi.x ** 2)
    cfg = prop.EvolutionConfig(EPS, 0.02, 1e-3, "bloch_strang", pot.mathieu5())
    r = prop.evolve(psi, cfg, observables={"phi": phi}, snap_every=1)
    rec = prop.density_record(r)
    a = prop.time_averaged_density(rec, 0.0, 0.02, phi)
    b = prop.time_average(r.times, r.observables["phi"], 0.0, 0.02)
    assert a == pytest.approx(b, rel=1e-12)


def test_time_average_linear():
    t = np.linspace(0, 1, 11)
    assert prop.time_average(t, 3 * t + 1, 0.15, 0.85) == pytest.approx(1.5 * (0.85 ** 2 - 0.15 ** 2) + 0.7)
    with pytest.raises(ValueError):
        prop.time_average(t, t, 0.5, 1.5)


def test_validation_errors():
    psi = ms.packet(L, EPS)
    with pytest.raises(ValueError):
        run(psi, pot.mathieu5(), "fourier_split", 0.5 * EPS ** 2, 0.1)
    with pytest.raises(ValueError):
        run(psi, pot.mathieu5(), "bloch_strang", 0.03, 0.1)
    with pytest.raises(ValueError):
        run(psi, pot.mathieu5(), "leapfrog", 0.01, 0.1)


def test_tail_error_for_uncovered_content():
    psi = ms.make_field(L, EPS, lambda x: np.exp(1j * 2 * np.pi * 60 * x / L))
    with pytest.raises(prop.TailError):
        run(psi, pot.mathieu5(), "bloch_strang", 0.01, 0.01)


def test_wigner_marginal_and_symmetry():
    psi = ms.packet(L, EPS, 0.7, 0.2, 0.3, N=256)
    assert prop.wigner_marginal_error(psi) < 1e-12
    x, xi, W = prop.wigner(psi)
    _, _, C = prop.cross_wigner(psi, psi)
    assert np.allclose(W, C.real) and np.max(np.abs(C.imag)) < 1e-12
    i = np.argmin(np.abs(x - 0.2))
    assert xi[np.argmax(W[i])] == pytest.approx(0.7, abs=2 * (xi[1] - xi[0]))


@given(st.floats(-2.0, 2.0), st.sampled_from([1e-3, 2e-3, 5e-3]))
def test_unitarity(xi0, dt):
    psi = ms.packet(L, EPS, xi0, 0.0, 0.3, N=256)
    vext = lambda t, x: np.cos(x)
    r = run(psi, pot.mathieu5(), "bloch_strang", dt, 0.02, vext)
    assert abs(r.mass[-1] - r.mass[0]) < 1e-12
    assert prop.wigner_marginal_error(r.field) < 1e-6
