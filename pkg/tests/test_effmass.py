import numpy as np
import pytest
import scipy.fft as sfft
from hypothesis import given, strategies as st

from blochlimit import potential as pot, modespace as ms, effmass as em, hill1d


def test_windows():
    eta = np.linspace(-20, 20, 401)
    w = em.lowpass(eta, 8.0)
    assert np.all(w[np.abs(eta) <= 8] == 1) and np.all(w[np.abs(eta) >= 12] < 1e-30)
    x = np.linspace(-3, 3, 61)
    b = em.bump(x, 0.5, 1.0)
    assert b.max() == pytest.approx(1.0) and np.all(b[np.abs(x - 0.5) >= 1] == 0)


def test_model_validation():
    with pytest.raises(ValueError):
        em.EffModel("cubic", 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        em.EffModel("pair_degenerate_q2", 0.0, [[1.0]], 1, theta=-1.0)


def test_critical_models_mathieu(mathieu, mathieu_table):
    models = em.critical_models(mathieu, 3)
    assert [(m.band, m.center) for m in models] == [(n, c) for n in (1, 2, 3) for c in (0.0, np.pi)]
    for m in models:
        p = [q for q in hill1d.classify_pi_lattice(mathieu_table, m.band) if q.xi == m.center][0]
        assert m.mass_matrix == pytest.approx(p.rho_pp, rel=1e-5)


def test_free_scalar_model_is_free_flow():
    L, eps = 16.0, 0.125
    psi = ms.packet(L, eps, 0.0, 0.0, 1.0)
    fib = ms.dual_fibers(pot.free(), L, eps)
    models = em.critical_models(pot.free(), 1)
    assert len(models) == 1 and models[0].mass_matrix == pytest.approx(1.0)
    pr = em.profiles_for(psi, fib, models)[0]
    assert pr.mass == pytest.approx(1.0, abs=1e-12)
    _, _, mass, g = em.solve_scalar(models[0], pr, 0.5, 0.05)
    k = 2 * np.pi * sfft.fftfreq(psi.N, psi.dx)
    exact = sfft.ifft(np.exp(-0.25j * k ** 2) * sfft.fft(psi.values))
    assert np.max(np.abs(g.values - exact)) < 1e-12
    assert np.ptp(mass) < 1e-13


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
def test_sign_conventions_agree_for_real_data(a, x0):
    L, eps = 16.0, 0.125
    g0 = ms.make_field(L, eps, lambda x: ms.gaussian(x, x0, 0.8))
    model = em.EffModel("scalar_point", 0.0, a, 1)
    pr = em.Profile(g0, g0.norm2(), model)
    _, _, _, g1 = em.solve_scalar(model, pr, 0.3, 0.01)
    _, _, _, g2 = em.solve_scalar(model, pr, 0.3, 0.01, literal_sign=True)
    assert np.allclose(g1.density(), g2.density(), atol=1e-12)


def test_snap_warning(mathieu):
    L, eps = 16.0, 0.125
    psi = ms.packet(L, eps)
    fib = ms.dual_fibers(mathieu, L, eps)
    with pytest.warns(UserWarning):
        em.extract_profile_scalar(psi, fib, 1, 0.01)


def _pair_setup(N=64):
    grid = ms.make_field(8.0, 1.0, lambda x: 0 * x, N)
    vext = lambda t, x: 0.5 * np.exp(-x ** 2 / 2)
    model = em.EffModel("pair_degenerate_q2", 0.0, [[1.0]], 1, vext, theta=0.25)
    x = grid.x
    u1 = np.stack([np.exp(-x ** 2), 0.5 * np.exp(-(x - 1) ** 2)])
    u2 = np.stack([np.exp(1j * x) * np.exp(-(x + 1) ** 2), np.exp(-x ** 2 / 3)])
    return grid, model, [(0.7, u1), (0.3, u2)]


def test_purify_round_trip():
    grid, _, ens = _pair_setup()
    Mt = em.ensemble_matrix(ens, grid.dx)
    again = em.ensemble_matrix(em.purify(Mt, grid.dx), grid.dx)
    assert np.allclose(Mt, again, atol=1e-12)


def test_pair_against_commutator_small():
    grid, model, ens = _pair_setup()
    Mt = em.ensemble_matrix(ens, grid.dx)
    out, trace = em.solve_pair(model, em.purify(Mt, grid.dx), grid, 0.05, 1e-3)
    H = em.pair_hamiltonian_matrix(model, grid)
    ref = em.integrate_commutator(H, Mt, 0.05, 1e-4)
    got = em.ensemble_matrix(out, grid.dx)
    assert np.abs(np.linalg.eigvalsh(got - ref)).sum() < 1e-5
    assert np.ptp(trace) < 1e-12


def test_pair_rejects_scalar():
    grid, _, ens = _pair_setup()
    with pytest.raises(ValueError):
        em.solve_pair(em.EffModel("scalar_point", 0.0, 1.0, 1), ens, grid, 0.1, 0.01)


def test_well_prepared_leak(mathieu):
    L, eps = 16.0, 0.125
    fib = ms.dual_fibers(mathieu, L, eps)
    N = fib.N
    x = -L / 2 + L / N * np.arange(N)
    wide = np.exp(-x ** 2 / (2 * 0.01 ** 2))        # spectrum far wider than one cell
    with pytest.raises(ValueError):
        em.well_prepared(fib, L, eps, [1], [0.0], [wide], N)


def test_interaction_mismatched_prediction_is_zero(mathieu):
    rows = em.interaction_offdiagonal(mathieu, 1, np.pi, np.pi, np.pi + 0.1, [1 / 16])
    assert rows[0].predicted == 0
    assert abs(rows[0].overlap) < 0.5
