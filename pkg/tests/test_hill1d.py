import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from blochlimit import potential as pot, hill1d


def monodromy_reference(V, lam):
    """Independent trace of the period map with a stiff implicit integrator."""
    def rhs(y, u):
        f, fp = u
        return [fp, 2 * (V(np.array([y]))[0] - lam) * f]
    cols = []
    for u0 in ([1.0, 0.0], [0.0, 1.0]):
        s = solve_ivp(rhs, (0, 1), u0, method="Radau", rtol=1e-12, atol=1e-13)
        cols.append(s.y[:, -1])
    return np.array(cols).T


def test_free_discriminant_closed_form():
    lam = np.linspace(0, 50, 201)
    d, dp = hill1d.disc(pot.free(), lam)
    assert np.max(np.abs(d - 2 * np.cos(np.sqrt(2 * lam)))) < 1e-9
    inner = lam > 0.5
    ref = -2 * np.sin(np.sqrt(2 * lam[inner])) / np.sqrt(2 * lam[inner])
    assert np.max(np.abs(dp[inner] - ref)) < 1e-8


def test_negative_energy_free():
    lam = np.array([-3.0, -0.5])
    d, _ = hill1d.disc(pot.free(), lam)
    assert np.allclose(d, 2 * np.cosh(np.sqrt(-2 * lam)), rtol=1e-11)


def test_monodromy_against_implicit_solver(mathieu):
    for lam in (-2.0, 1.3, 17.0):
        m = hill1d.monodromy(mathieu, lam)
        ref = monodromy_reference(mathieu, lam)
        assert np.allclose(m.M, ref, atol=1e-7 * np.abs(ref).max())
        assert abs(np.linalg.det(m.M) - 1) < 1e-9


def test_edges_mathieu(mathieu_table):
    e = mathieu_table.edges
    assert len(e.edges) == 14
    assert np.all(np.diff(e.edges) >= -1e-9)
    # the open gaps are large; the fifth and sixth are below the discriminant's resolution
    assert not any(i.double for i in e.info[:8])


def test_band_values_match_level_equation(mathieu_table, mathieu):
    xi = np.linspace(0.2, 2.9, 7)
    bv = mathieu_table.band_value(2, xi)
    d, _ = hill1d.disc(mathieu, bv.rho)
    assert np.allclose(d, 2 * np.cos(xi), atol=1e-9)


def test_band_value_even(mathieu_table):
    xi = np.array([0.4, 1.7, 3.0])
    a = mathieu_table.band_value(3, xi)
    b = mathieu_table.band_value(3, -xi)
    assert np.allclose(a.rho, b.rho)
    assert np.allclose(a.rho_p, -b.rho_p, atol=1e-9)


def test_pi_lattice_free():
    t = hill1d.band_table(pot.free(), 3)
    pts = hill1d.classify_pi_lattice(t, 1)
    assert [p.kind for p in pts] == ["critical", "crossing"]
    assert pts[0].rho_pp == pytest.approx(1.0, rel=1e-6)
    assert pts[1].partner == 2


def test_interlacing_violation():
    with pytest.raises(hill1d.InterlacingError):
        hill1d.check_interlacing(np.array([0.0, 1.0, 0.5, 2.0]), [1, -1, -1, 1], [False] * 4)


def test_incomplete_when_range_too_small(mathieu):
    with pytest.raises(hill1d.IncompleteError):
        hill1d.band_edges(mathieu, 6, max_lambda=10.0)


def test_scan_validation(mathieu):
    with pytest.raises(ValueError):
        hill1d.discriminant_scan(mathieu, (3.0, 1.0), 10)


@given(st.floats(-4.0, 80.0))
def test_wronskian_conserved(lam):
    m = hill1d.monodromy(pot.mathieu5(), lam)
    assert abs(np.linalg.det(m.M) - 1) < 1e-9


@given(st.floats(-3.0, 3.0), st.lists(st.floats(-2.0, 40.0), min_size=1, max_size=5))
def test_constant_shift_moves_spectrum(c, lams):
    # Delta for V + c at lam + c equals Delta for V at lam
    V = pot.cosine_terms([(1, 1.0)])
    lam = np.array(lams)
    a, _ = hill1d.disc(V, lam)
    b, _ = hill1d.disc(V.shifted(c), lam + c)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-9)
