"""Bloch-mode calculus for fields psi(x) on a periodic box.

Worked example of the index bookkeeping.  Take L = 16, eps = 1/8, so the box holds
M = L/eps = 128 fast periods, and N_g = 1024 grid points.  The FFT index m carries
the physical frequency xi = 2 pi m / L and the scaled frequency zeta = eps xi =
2 pi m / M.  Writing m = r + M k with r in [-M/2, M/2) splits zeta into the reduced
quasimomentum zeta_r = 2 pi r / M and the cell k.  Shifting zeta by 2 pi is the
integer index shift m -> m + M, so the translates e^{2 pi i k x/eps} are exact
rotations of the FFT array.  For each r the amplitudes a_r[k] = psihat(r + M k),
|k| <= K, are the plane-wave coordinates of the fiber at zeta_r, and the Bloch mode
amplitudes are b_n(r) = sum_k conj(c_k^n(zeta_r)) a_r[k].
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import galerkin


class GridError(ValueError):
    """The field grid violates the box or resolution rules."""


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def fast_periods(L, eps):
    M = L / eps
    Mi = int(round(M))
    if Mi < 1 or abs(M - Mi) > 1e-9 * max(1.0, M):
        raise GridError(f"L/eps = {M:g} is not an integer number of fast periods")
    return Mi


def default_points(L, eps, per_period=8):
    M = fast_periods(L, eps)
    n = 1
    while n < per_period * M:
        n *= 2
    return n


@dataclass
class WaveField:
    values: np.ndarray
    L: float
    eps: float
    time: float = 0.0
    dim: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    @property
    def N(self):
        return self.values.shape[-1]

    @property
    def dx(self):
        return self.L / self.N

    @property
    def x(self):
        return -self.L / 2 + self.dx * np.arange(self.N)

    @property
    def M(self):
        return fast_periods(self.L, self.eps)

    @property
    def freq_index(self):
        return np.rint(sfft.fftfreq(self.N, 1.0 / self.N)).astype(int)

    @property
    def xi(self):
        return 2 * np.pi * self.freq_index / self.L

    def validate(self):
        if self.dim != 1 or self.values.ndim != 1:
            raise GridError("fields are one-dimensional")
        if not _is_pow2(self.N):
            raise GridError(f"N_g = {self.N} is not a power of two")
        self.M  # box rule
        if self.dx > self.eps / 8 * (1 + 1e-12):
            raise GridError(f"dx = {self.dx:g} exceeds eps/8 = {self.eps / 8:g}")
        return self

    def norm2(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)

    def spectrum(self):
        """FFT coefficients scaled so that sum |F|^2 = ||psi||^2."""
        return sfft.fft(self.values) * np.sqrt(self.dx / self.N)

    @classmethod
    def from_spectrum(cls, F, L, eps, time=0.0):
        N = F.shape[-1]
        return cls(sfft.ifft(F) / np.sqrt((L / N) / N), L, eps, time)

    def with_values(self, values, time=None):
        return replace(self, values=np.asarray(values, dtype=complex),
                       time=self.time if time is None else time)

    def density(self):
        return np.abs(self.values) ** 2


def make_field(L, eps, fn=None, N=None, time=0.0):
    """Field on [-L/2, L/2) with the default resolution; fn(x) gives the samples."""
    if N is None:
        N = default_points(L, eps)
    f = WaveField(np.zeros(N, dtype=complex), L, eps, time)
    if fn is not None:
        f.values = np.asarray(fn(f.x), dtype=complex) * np.ones(N)
    return f.validate()


def gaussian(x, x0=0.0, sigma=1.0):
    """Unit-L2 Gaussian."""
    return (np.pi * sigma ** 2) ** -0.25 * np.exp(-(x - x0) ** 2 / (2 * sigma ** 2))


def packet(L, eps, xi0=0.0, x0=0.0, sigma=1.0, N=None):
    """e^{i xi0 x/eps} Phi(x - x0) with Phi a unit Gaussian."""
    return make_field(L, eps, lambda x: np.exp(1j * xi0 * x / eps) * gaussian(x, x0, sigma), N)


# ---- norms and spectral diagnostics ------------------------------------------------

def hs_eps_norm(psi, s):
    """sum (1 + |eps xi|^2)^s |psihat|^2; equals ||psi||^2 at s = 0."""
    F = psi.spectrum()
    w = (1 + (psi.eps * psi.xi) ** 2) ** s
    return float(np.sum(w * np.abs(F) ** 2))


def eps_oscillation_profile(psi, R_values):
    """Spectral mass outside |eps xi| <= R for each R."""
    F2 = np.abs(psi.spectrum()) ** 2
    z = np.abs(psi.eps * psi.xi)
    order = np.argsort(z)
    zs, cum = z[order], np.cumsum(F2[order][::-1])[::-1]
    R = np.atleast_1d(np.asarray(R_values, dtype=float))
    pos = np.searchsorted(zs, R, side="right")
    tail = np.where(pos < len(zs), cum[np.minimum(pos, len(zs) - 1)], 0.0)
    return tail


def frequency_filter(psi, chi):
    """Apply chi(eps D) to psi."""
    F = sfft.fft(psi.values) * chi(psi.eps * psi.xi)
    return psi.with_values(sfft.ifft(F))


# ---- fibers on the dual grid ------------------------------------------------------

@dataclass
class DualFibers:
    """Full Galerkin fiber solves at every reduced node zeta_r = 2 pi r/M."""
    V: object
    M: int
    K: int
    N: int
    r: np.ndarray
    energies: np.ndarray   # (M, n_k)
    waves: np.ndarray      # (M, n_k, n_k); waves[r][:, n] = c^{n+1}(zeta_r)
    index: np.ndarray      # (M, n_k) FFT slot of m = r + M k, -1 outside the grid
    meta: dict = field(default_factory=dict)

    @property
    def zeta(self):
        return 2 * np.pi * self.r / self.M

    @property
    def n_modes(self):
        return self.energies.shape[1]

    def covered(self):
        mask = np.zeros(self.N, dtype=bool)
        mask[self.index[self.index >= 0]] = True
        return mask

    def regauged(self, rng):
        ph = np.exp(2j * np.pi * rng.random((self.M, 1, self.n_modes)))
        return replace(self, waves=self.waves * ph, meta=dict(self.meta, gauge="random"))

    def node(self, zeta):
        """Index of the reduced node nearest zeta and the snap distance."""
        s = zeta * self.M / (2 * np.pi)
        si = int(np.rint(s))
        rr = (si + self.M // 2) % self.M - self.M // 2
        return int(np.nonzero(self.r == rr)[0][0]), abs(s - si) * 2 * np.pi / self.M

    def transported_phases(self, n, center):
        """Phases p_r with waves[:, :, n-1] * p_r parallel-transported from node `center`.

        The walk wraps across the zone boundary, where neighbouring fibers are
        compared after the cell relabelling c_k(zeta + 2 pi) = c_{k+1}(zeta).
        """
        M = self.M
        c = self.waves[:, :, n - 1]
        ph = np.ones(M, dtype=complex)
        right = [(center + j) % M for j in range(M - M // 2)]
        left = [(center - j) % M for j in range(M // 2 + 1)]
        for path in (right, left):
            for prev, cur in zip(path[:-1], path[1:]):
                v = c[cur]
                if prev == M - 1 and cur == 0:      # zeta crosses +pi upward
                    v = np.concatenate([v[1:], [0]])
                elif prev == 0 and cur == M - 1:    # zeta crosses -pi downward
                    v = np.concatenate([[0], v[:-1]])
                o = np.vdot(c[prev] * ph[prev], v)
                ph[cur] = np.conj(o) / abs(o) if abs(o) > 0 else 1.0
        return ph


def dual_fibers(V, L, eps, N=None, K=None):
    """Fibers for a field grid; K defaults to the largest cell range inside the grid."""
    M = fast_periods(L, eps)
    if N is None:
        N = default_points(L, eps)
    Kmax = int(np.floor(N / (2 * M) - 0.5))
    if K is None:
        K = Kmax
    if K > Kmax:
        raise GridError(f"cutoff K={K} needs cells beyond the grid (max {Kmax})")
    if K < V.band_limit:
        raise GridError(f"cutoff K={K} below the potential band limit")
    r = np.arange(-(M // 2), M - M // 2)
    zeta = 2 * np.pi * r / M
    w, c, res = galerkin.solve_fibers(V, zeta, K)
    # parallel transport outward from zeta = 0 so amplitudes vary smoothly in r
    i0 = M // 2
    right, _ = galerkin.transport_line(c[i0:])
    left, _ = galerkin.transport_line(c[:i0 + 1][::-1])
    c = np.concatenate([left[::-1][:-1], right])
    ks = np.arange(-K, K + 1)
    m = r[:, None] + M * ks[None, :]
    ok = (m >= -N // 2) & (m < N // 2)
    index = np.where(ok, np.mod(m, N), -1)
    return DualFibers(V, M, K, N, r, w, c, index,
                      meta={"max_residual": float(res.max()), "gauge": "transported"})


# ---- decomposition -----------------------------------------------------------

@dataclass
class ModeCoefficients:
    """Mode amplitudes b[n-1, r] plus bookkeeping for recomposition.

    The scaled-frequency content of mode n, u_n = conj(c_0^n)(eps D) psi, is
    available through ``u(n)``; ``b`` holds the same information in the reduced
    cell coordinates.
    """
    b: np.ndarray
    fibers: DualFibers
    L: float
    eps: float
    time: float
    spectrum: np.ndarray
    norm2: float

    @property
    def n_modes(self):
        return self.b.shape[0]

    def mode_norms2(self):
        return np.sum(np.abs(self.b) ** 2, axis=1)

    @property
    def tail(self):
        return max(self.norm2 - float(self.mode_norms2().sum()), 0.0)

    def u(self, n):
        f = self.fibers
        F = np.zeros(f.N, dtype=complex)
        ok = f.index >= 0
        c = f.waves[:, :, n - 1]
        F[f.index[ok]] = (np.conj(c) * np.where(ok, self.spectrum[np.maximum(f.index, 0)], 0))[ok]
        return WaveField.from_spectrum(F, self.L, self.eps, self.time)


def _check_grid(psi, fibers):
    psi.validate()
    if psi.N != fibers.N or psi.M != fibers.M:
        raise GridError("field grid does not match the fiber table")


def cell_amplitudes(F, fibers):
    idx = fibers.index
    return np.where(idx >= 0, F[np.maximum(idx, 0)], 0)


def decompose(psi, fibers, N=None):
    _check_grid(psi, fibers)
    n = fibers.n_modes if N is None else int(N)
    if n > fibers.n_modes:
        raise ValueError(f"{n} modes requested, {fibers.n_modes} available")
    F = psi.spectrum()
    A = cell_amplitudes(F, fibers)
    B = np.einsum("rkn,rk->nr", np.conj(fibers.waves[:, :, :n]), A)
    return ModeCoefficients(B, fibers, psi.L, psi.eps, psi.time, F, float(np.sum(np.abs(F) ** 2)))


def recompose(modes, subset=None):
    f = modes.fibers
    if subset is None:
        subset = range(1, modes.n_modes + 1)
    sub = [n - 1 for n in subset]
    F = np.zeros(f.N, dtype=complex)
    if sub:
        A = np.einsum("rkn,nr->rk", f.waves[:, :, sub], modes.b[sub])
        ok = f.index >= 0
        F[f.index[ok]] = A[ok]
    return WaveField.from_spectrum(F, modes.L, modes.eps, modes.time)


def modes_from_amplitudes(b, fibers, L, eps, time=0.0):
    """ModeCoefficients from given amplitudes (for building mode-pure data)."""
    full = np.zeros((fibers.n_modes, fibers.M), dtype=complex)
    full[:b.shape[0]] = b
    mc = ModeCoefficients(full, fibers, L, eps, time, np.zeros(fibers.N, complex), 0.0)
    psi = recompose(mc)
    mc.spectrum = psi.spectrum()
    mc.norm2 = float(np.sum(np.abs(mc.spectrum) ** 2))
    return mc


def tail_norm(psi, fibers, N):
    modes = decompose(psi, fibers)
    rest = recompose(modes, range(1, N + 1))
    return float(np.sqrt(np.sum(np.abs(psi.values - rest.values) ** 2) * psi.dx))


# ---- field I/O -------------------------------------------------------------------

def write_field(path, psi):
    """Raw little-endian complex64 samples at path.bin with a JSON sidecar path.json."""
    p = Path(path)
    base = p.with_suffix("") if p.suffix in (".bin", ".json") else p
    base.parent.mkdir(parents=True, exist_ok=True)
    psi.values.astype("<c8").tofile(base.with_suffix(".bin"))
    meta = {"dim": psi.dim, "N_g": psi.N, "L": psi.L, "eps": psi.eps, "time": psi.time}
    base.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return base.with_suffix(".bin")


def read_field(path):
    p = Path(path)
    base = p.with_suffix("") if p.suffix in (".bin", ".json") else p
    meta = json.loads(base.with_suffix(".json").read_text())
    vals = np.fromfile(base.with_suffix(".bin"), dtype="<c8").astype(complex)
    if vals.size != meta["N_g"]:
        raise GridError("sample count does not match the sidecar")
    return WaveField(vals, meta["L"], meta["eps"], meta["time"], meta["dim"])
