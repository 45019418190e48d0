import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blochlimit import potential as pot


def test_mathieu_samples():
    V = pot.mathieu5()
    y = np.linspace(0, 1, 17)
    assert np.allclose(V(y), 5 * np.cos(2 * np.pi * y), atol=1e-13)
    assert V.band_limit == 1
    assert V.mean == 0.0


def test_constant_and_free():
    assert np.allclose(pot.constant(2.5)(np.r_[0.1, 0.7]), 2.5)
    assert pot.free(2)(np.zeros((3, 2))).shape == (3,)
    assert pot.free().band_limit == 0


def test_non_hermitian_rejected():
    with pytest.raises(pot.SymmetryError):
        pot.from_fourier([(1, 1.0), (-1, 2.0)])
    with pytest.raises(pot.SymmetryError):
        pot.from_fourier([(1, 1j)])


def test_preset_errors():
    with pytest.raises(KeyError):
        pot.preset("nope")
    with pytest.raises(ValueError):
        pot.preset("mathieu5", 2)
    assert pot.preset("free", 2).dim == 2


def test_json_round_trip():
    V = pot.cosine_terms([(1, 2.0), (3, -0.5)])
    W = pot.from_json(json.dumps(V.to_json()))
    assert W.coeffs == V.coeffs


def test_separable_sum():
    V = pot.separable(pot.mathieu5(), pot.cosine_terms([(2, 1.0)]))
    y = np.array([[0.1, 0.3], [0.25, 0.8]])
    ref = 5 * np.cos(2 * np.pi * y[:, 0]) + np.cos(4 * np.pi * y[:, 1])
    assert np.allclose(V(y), ref, atol=1e-12)


@given(st.lists(st.tuples(st.integers(1, 4), st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=4),
       st.floats(-2, 2))
def test_real_and_periodic(terms, shift):
    V = pot.from_fourier([(k, complex(a, b)) for k, a, b in terms]
                         + [(-k, complex(a, -b)) for k, a, b in terms])
    y = np.linspace(0, 1, 13)
    v = V(y)
    assert np.all(np.isreal(v))
    assert np.allclose(V(y + 1.0), v, atol=1e-10)
    assert np.allclose(V.shifted(shift)(y), v + shift, atol=1e-10)
