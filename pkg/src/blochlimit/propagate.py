"""Time evolution of i psi_t = -psi_xx/2 + eps^-2 V(x/eps) psi + V_ext(t, x) psi.

Two schemes:

* ``bloch_strang``: the stiff part -Delta/2 + eps^-2 V(x/eps) is applied exactly in the
  Bloch basis (phases e^{-i dt rho_n(zeta)/eps^2} per reduced node), V_ext by Strang
  splitting around it.  dt is not limited by eps.
* ``fourier_split``: plain Strang split-step with kinetic factor in Fourier space and the
  full potential in physical space.  Needs dt <= 0.1 eps^2; kept as a cross-check.
"""
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import modespace as ms

SCHEMES = ("bloch_strang", "fourier_split")


class TailError(RuntimeError):
    """Field content outside the retained Bloch cells exceeds the threshold."""


@dataclass
class EvolutionConfig:
    eps: float
    t_final: float
    dt: float
    scheme: str
    V_per: object
    V_ext: object = None            # callable (t, x) -> array, or None
    time_dependent: bool = False
    n_retained: int = None          # bloch_strang: modes kept (default all in the cutoff)
    K: int = None
    tail_threshold: float = 1e-6

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0 or not self.t_final >= 0:
            raise ValueError("dt must be positive and t_final nonnegative")
        if self.scheme == "fourier_split" and self.dt > 0.1 * self.eps ** 2 * (1 + 1e-12):
            raise ValueError(f"fourier_split needs dt <= 0.1 eps^2 = {0.1 * self.eps ** 2:g}")
        return self


def _vext_values(cfg, t, x):
    if cfg.V_ext is None:
        return np.zeros_like(x)
    return np.asarray(cfg.V_ext(t, x), dtype=float) * np.ones_like(x)


class BlochStrang:
    def __init__(self, fibers, cfg, x):
        self.f = fibers
        self.cfg = cfg
        self.x = x
        n = fibers.n_modes if cfg.n_retained is None else cfg.n_retained
        self.n = n
        self.covered = fibers.covered()
        self.dropped = 0.0
        self._dt = None
        self._vext = None

    def _unitary(self, dt):
        if self._dt != dt:
            W = self.f.waves[:, :, :self.n]
            ph = np.exp(-1j * dt * self.f.energies[:, :self.n] / self.cfg.eps ** 2)
            self._U = np.einsum("rkn,rn,rjn->rkj", W, ph, np.conj(W))
            self._dt = dt
        return self._U

    def kick(self, values, t, dt):
        if self.cfg.V_ext is None:
            return values
        if self.cfg.time_dependent or self._vext is None or self._vext[0] != dt:
            v = _vext_values(self.cfg, t, self.x)
            self._vext = (dt, np.exp(-0.5j * dt * v))
        return values * self._vext[1]

    def periodic(self, values, dt, dx):
        N = values.size
        F = sfft.fft(values)
        out = F[~self.covered]
        self.dropped += float(np.sum(np.abs(out) ** 2)) * dx / N
        if self.dropped > self.cfg.tail_threshold:
            raise TailError(f"content outside the Bloch cells reached {self.dropped:.3g}")
        idx = self.f.index
        ok = idx >= 0
        A = np.where(ok, F[np.maximum(idx, 0)], 0)
        A = np.einsum("rkj,rj->rk", self._unitary(dt), A)
        G = np.zeros_like(F)
        G[idx[ok]] = A[ok]
        return sfft.ifft(G)

    def step(self, values, t, dt, dx):
        tm = t + 0.5 * dt
        v = self.kick(values, tm, dt)
        v = self.periodic(v, dt, dx)
        return self.kick(v, tm, dt)


class FourierSplit:
    def __init__(self, cfg, x, L):
        self.cfg = cfg
        self.x = x
        N = x.size
        k = 2 * np.pi * sfft.fftfreq(N, L / N)
        self.k2 = 0.5 * k ** 2
        self.vper = cfg.V_per.eval(x / cfg.eps) / cfg.eps ** 2
        self._dt = None

    def _factors(self, dt, t):
        if not self.cfg.time_dependent and self._dt == dt:
            return self._cache
        pot = self.vper + _vext_values(self.cfg, t, self.x)
        out = np.exp(-1j * dt * self.k2), np.exp(-0.5j * dt * pot), np.exp(-1j * dt * pot)
        self._dt, self._cache = dt, out
        return out

    def step(self, values, t, dt, dx=None):
        kin, half, _ = self._factors(dt, t + 0.5 * dt)
        v = values * half
        v = sfft.ifft(kin * sfft.fft(v))
        return v * half

    def run(self, values, t0, dt, nsteps):
        """nsteps Strang steps; adjacent potential half-steps are merged when V_ext is static."""
        if self.cfg.time_dependent:
            v = values
            for i in range(nsteps):
                v = self.step(v, t0 + i * dt, dt)
            return v
        kin, half, full = self._factors(dt, 0.0)
        fft, ifft = sfft.fft, sfft.ifft
        v = values * half
        for _ in range(nsteps - 1):
            v = ifft(kin * fft(v))
            v *= full
        v = ifft(kin * fft(v))
        return v * half


@dataclass
class EvolutionResult:
    field: ms.WaveField
    times: np.ndarray
    mass: np.ndarray
    observables: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    runtime: float = 0.0
    steps: int = 0
    dropped: float = 0.0


@dataclass
class DensityRecord:
    times: np.ndarray
    x: np.ndarray
    densities: np.ndarray     # (n_t, N)
    dx: float


def evolve(psi0, cfg, fibers=None, observables=None, snap_every=None, record_every=1):
    """Evolve psi0 to cfg.t_final.

    observables maps a name to a weight phi(x) on the grid; int phi |psi|^2 dx is
    recorded every ``record_every`` steps (and at t = 0).  snap_every stores fields.
    """
    cfg.validate()
    psi0.validate()
    if abs(psi0.eps - cfg.eps) > 1e-15:
        raise ValueError("field and config disagree on eps")
    nsteps = int(round(cfg.t_final / cfg.dt))
    if abs(nsteps * cfg.dt - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
        raise ValueError("t_final must be a multiple of dt")
    x, dx = psi0.x, psi0.dx
    if cfg.scheme == "bloch_strang":
        if fibers is None:
            fibers = ms.dual_fibers(cfg.V_per, psi0.L, psi0.eps, psi0.N, cfg.K)
        F = psi0.spectrum()
        outside = float(np.sum(np.abs(F[~fibers.covered()]) ** 2))
        if outside > cfg.tail_threshold:
            raise TailError(f"initial content outside the Bloch cells is {outside:.3g}")
        stepper = BlochStrang(fibers, cfg, x)
    else:
        stepper = FourierSplit(cfg, x, psi0.L)
    obs = {k: np.asarray(w, dtype=float) for k, w in (observables or {}).items()}
    rec_t, rec_m = [0.0], [psi0.norm2()]
    rec_o = {k: [float(np.sum(w * np.abs(psi0.values) ** 2) * dx)] for k, w in obs.items()}
    snaps = [psi0] if snap_every else []
    v = psi0.values.copy()
    t0 = psi0.time
    start = _time.perf_counter()
    fast = (cfg.scheme == "fourier_split" and not obs and not snap_every)
    if fast:
        v = stepper.run(v, t0, cfg.dt, nsteps)
    else:
        for i in range(nsteps):
            v = stepper.step(v, t0 + i * cfg.dt, cfg.dt, dx)
            j = i + 1
            if obs and j % record_every == 0:
                rho = np.abs(v) ** 2
                rec_t.append(j * cfg.dt)
                rec_m.append(float(np.sum(rho) * dx))
                for k, w in obs.items():
                    rec_o[k].append(float(np.sum(w * rho) * dx))
            if snap_every and j % snap_every == 0:
                snaps.append(psi0.with_values(v.copy(), t0 + j * cfg.dt))
    runtime = _time.perf_counter() - start
    final = psi0.with_values(v, t0 + nsteps * cfg.dt)
    if not obs or rec_t[-1] != nsteps * cfg.dt:
        rec_t.append(nsteps * cfg.dt)
        rec_m.append(final.norm2())
        for k, w in obs.items():
            rec_o[k].append(float(np.sum(w * np.abs(v) ** 2) * dx))
    return EvolutionResult(final, np.array(rec_t) + t0, np.array(rec_m),
                           {k: np.array(s) for k, s in rec_o.items()}, snaps, runtime, nsteps,
                           getattr(stepper, "dropped", 0.0))


def density_record(result):
    snaps = result.snapshots
    if not snaps:
        raise ValueError("no snapshots stored; pass snap_every")
    return DensityRecord(np.array([s.time for s in snaps]), snaps[0].x,
                         np.array([s.density() for s in snaps]), snaps[0].dx)


def time_average(times, values, a, b):
    """Trapezoidal int_a^b of a sampled function, with linear interpolation at a and b."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not a < b or a < times[0] - 1e-12 or b > times[-1] + 1e-12:
        raise ValueError("window (a, b) must lie inside the simulated times")
    inner = (times > a) & (times < b)
    t = np.concatenate([[a], times[inner], [b]])
    y = np.concatenate([[np.interp(a, times, values)], values[inner], [np.interp(b, times, values)]])
    return float(np.trapezoid(y, t))


def time_averaged_density(record, a, b, phi):
    """int_a^b int phi |psi|^2 dx dt from a DensityRecord."""
    phi = np.asarray(phi, dtype=float) * np.ones(record.densities.shape[1])
    series = record.densities @ phi * record.dx
    return time_average(record.times, series, a, b)


# ---- Wigner transform --------------------------------------------------------------

def _wigner_core(f, g, dx, eps, n_lag, stride):
    N = f.size
    n_lag = min(n_lag, N)
    lags = np.arange(-(n_lag // 2), n_lag - n_lag // 2)
    rows = np.arange(0, N, stride)
    plus = (rows[:, None] + lags[None, :]) % N
    minus = (rows[:, None] - lags[None, :]) % N
    prod = f[minus] * np.conj(g[plus])
    # W(x, xi_p) = dx/(pi eps) sum_l prod_l e^{2 i xi_p l dx/eps},  xi_p = p pi eps/(n_lag dx)
    p = np.arange(-(n_lag // 2), n_lag - n_lag // 2)
    E = np.exp(2j * np.pi * np.outer(lags, p) / n_lag)
    W = (prod @ E) * dx / (np.pi * eps)
    xi = p * np.pi * eps / (n_lag * dx)
    return rows, xi, W


def wigner(psi, x_window=None, xi_window=None, n_lag=256, stride=1):
    """Discrete Wigner transform W(x, xi) of a 1-D field.

    Lags are restricted to |l| < n_lag/2 (periodic indexing); on the matching xi grid
    the x-marginal sum_p W dxi reproduces |psi|^2 exactly.  Returns (x, xi, W) with
    optional cropping to the windows.
    """
    rows, xi, W = _wigner_core(psi.values, psi.values, psi.dx, psi.eps, n_lag, stride)
    return _crop(psi.x[rows], xi, W.real, x_window, xi_window)


def cross_wigner(psi, phi, x_window=None, xi_window=None, n_lag=256, stride=1):
    rows, xi, W = _wigner_core(psi.values, phi.values, psi.dx, psi.eps, n_lag, stride)
    return _crop(psi.x[rows], xi, W, x_window, xi_window)


def _crop(x, xi, W, x_window, xi_window):
    mx = np.ones(x.size, bool) if x_window is None else (x >= x_window[0]) & (x <= x_window[1])
    mk = np.ones(xi.size, bool) if xi_window is None else (xi >= xi_window[0]) & (xi <= xi_window[1])
    return x[mx], xi[mk], W[np.ix_(mx, mk)]


def wigner_marginal_error(psi, n_lag=256, stride=1):
    rows, xi, W = _wigner_core(psi.values, psi.values, psi.dx, psi.eps, n_lag, stride)
    dxi = xi[1] - xi[0]
    return float(np.max(np.abs(W.real.sum(axis=1) * dxi - np.abs(psi.values[rows]) ** 2)))
