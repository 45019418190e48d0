"""Band-limited real periodic potentials on the unit torus.

A potential is stored by its Fourier coefficients ``coeffs[k] = V_k`` with
``V(y) = sum_k V_k exp(2 pi i k.y)``, ``k`` an integer vector of length ``dim``.
"""
import json
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
IMAG_TOL = 1e-12


class SymmetryError(ValueError):
    """Coefficients do not describe a real-valued potential."""


def _key(k, dim):
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != dim:
        raise ValueError(f"frequency {k} does not have dimension {dim}")
    return k


@dataclass(frozen=True)
class PeriodicPotential:
    dim: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only dim 1 or 2 is supported")

    @property
    def band_limit(self):
        if not self.coeffs:
            return 0
        return max(max(abs(v) for v in k) for k in self.coeffs)

    @property
    def mean(self):
        return self.coeffs.get((0,) * self.dim, 0.0).real

    def coefficient(self, k):
        return self.coeffs.get(_key(k, self.dim), 0.0)

    def _arrays(self):
        if not self.coeffs:
            return np.zeros((0, self.dim), dtype=int), np.zeros(0, dtype=complex)
        ks = np.array(list(self.coeffs.keys()), dtype=int)
        vs = np.array(list(self.coeffs.values()), dtype=complex)
        return ks, vs

    def eval(self, y):
        """Evaluate V at points y. For dim 1, y may have any shape; for dim 2 the last axis has length 2."""
        y = np.asarray(y, dtype=float)
        ks, vs = self._arrays()
        if self.dim == 1:
            pts = y[..., None]
        else:
            if y.shape[-1] != 2:
                raise ValueError("2-D potential needs points with a trailing axis of length 2")
            pts = y
        out_shape = y.shape if self.dim == 1 else y.shape[:-1]
        if len(vs) == 0:
            return np.zeros(out_shape)
        phase = 2 * np.pi * (pts.reshape(-1, self.dim) @ ks.T)
        val = np.exp(1j * phase) @ vs
        scale = 1.0 + np.abs(vs).sum()
        if np.max(np.abs(val.imag), initial=0.0) > IMAG_TOL * scale:
            raise SymmetryError("potential evaluates to a complex value")
        return val.real.reshape(out_shape)

    __call__ = eval

    def sample_extrema(self, n=512):
        """Approximate (min, max) of V from a uniform sample of the torus."""
        g = np.arange(n) / n
        if self.dim == 1:
            vals = self.eval(g)
        else:
            n2 = max(64, int(np.sqrt(n)) * 4)
            g = np.arange(n2) / n2
            yy = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
            vals = self.eval(yy)
        return float(vals.min()), float(vals.max())

    def shifted(self, c):
        z = (0,) * self.dim
        co = dict(self.coeffs)
        co[z] = co.get(z, 0.0) + c
        return PeriodicPotential(self.dim, co)

    def to_json(self):
        rows = [list(k) + [complex(v).real, complex(v).imag] for k, v in sorted(self.coeffs.items())]
        return {"dim": self.dim, "coeffs": rows}


def from_fourier(pairs, dim=None, tol=HERMITIAN_TOL):
    """Build a potential from (k, amplitude) pairs.

    The pairs must be closed under k -> -k with conjugate amplitudes.  Repeated
    keys are summed.  The result is symmetrised exactly after the check.
    """
    pairs = list(pairs)
    if dim is None:
        dim = len(np.atleast_1d(pairs[0][0])) if pairs else 1
    co = {}
    for k, a in pairs:
        k = _key(k, dim)
        co[k] = co.get(k, 0.0) + complex(a)
    co = {k: v for k, v in co.items() if v != 0}
    scale = max([1.0] + [abs(v) for v in co.values()])
    for k, v in co.items():
        mk = tuple(-x for x in k)
        partner = co.get(mk, 0.0)
        if abs(partner - np.conj(v)) > tol * scale:
            raise SymmetryError(f"coefficient at {mk} is {partner}, expected conj({v})")
    sym = {}
    for k, v in co.items():
        mk = tuple(-x for x in k)
        if k == mk:
            sym[k] = complex(v.real, 0.0)
        elif k > mk:
            sym[k] = complex(v)
            sym[mk] = complex(np.conj(v))
    return PeriodicPotential(dim, sym)


def cosine_terms(terms, dim=1):
    """Real-cosine shorthand: terms is a list of (k, a) meaning a*cos(2 pi k.y)."""
    pairs = []
    for k, a in terms:
        k = np.atleast_1d(k).astype(int)
        if not np.any(k):
            pairs.append((k, a))
        else:
            pairs += [(k, a / 2), (-k, a / 2)]
    return from_fourier(pairs, dim=dim)


def constant(c, dim=1):
    return from_fourier([((0,) * dim, c)], dim=dim)


def free(dim=1):
    return PeriodicPotential(dim, {})


def mathieu5():
    # 5 cos(2y) has period pi; rescaled to the unit period its samples are 5 cos(2 pi y)
    return cosine_terms([(1, 5.0)])


PRESETS = {"free": free, "mathieu5": mathieu5}


def preset(name, dim=1):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "free":
        return free(dim)
    if dim != 1:
        raise ValueError(f"preset {name} is one-dimensional")
    return PRESETS[name]()


def from_json(obj):
    """Parse the descriptor {"dim": d, "coeffs": [[k..., re, im], ...]} (dict or JSON text)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    dim = int(obj.get("dim", 1))
    pairs = []
    for row in obj.get("coeffs", []):
        if len(row) != dim + 2:
            raise ValueError(f"coefficient row {row} should have {dim + 2} entries")
        pairs.append((row[:dim], complex(row[dim], row[dim + 1])))
    return from_fourier(pairs, dim=dim)


def separable(v1, v2):
    """2-D potential V(y1, y2) = v1(y1) + v2(y2) from two 1-D potentials."""
    co = {}
    for (k,), a in v1.coeffs.items():
        co[(k, 0)] = co.get((k, 0), 0.0) + a
    for (k,), a in v2.coeffs.items():
        co[(0, k)] = co.get((0, k), 0.0) + a
    return PeriodicPotential(2, co)
