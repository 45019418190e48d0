"""Limit models for the eps -> 0 dynamics and the profiles that feed them.

Scalar models sit at non-degenerate critical points xi_c of a band and evolve a slow
profile g(t, x) by

    i g_t = -(rho''(xi_c)/2) g_xx + V_ext(t, x) g.

This is the operator form 1/2 rho'' D.D with D = -i d/dx; for V = 0 and rho = xi^2/2 it
reduces to the original equation without the periodic term.  ``literal_sign=True``
flips the dispersive term (the other sign convention), which only agrees with the full
dynamics when V_ext = 0 and the data are real.

Pair models sit at crossings where both bands are critical and the gap is quadratic,
g(sigma + eta) = theta |eta|^2.  The 2x2 Heisenberg equation for the density operator
is solved by purification: M = sum_j w_j |u_j><u_j| and each C^2-valued u_j evolves
under H = (1/2 Hess(lambda) D.D + V_ext) Id - theta |D|^2 J, with J = diag(1, -1).
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import galerkin
from . import modespace as ms
from .propagate import time_average

MASS_FLOOR = 1e-6
DEFAULT_WIDTH = 8.0


@dataclass
class EffModel:
    kind: str                 # scalar_point | pair_degenerate_q2 | pair_degenerate_qgt2
    center: float
    mass_matrix: object       # rho'' (scalar) or Hess lambda
    band: int
    V_ext: object = None      # callable (t, x) or None
    theta: float = 0.0        # q = 2 gap coefficient, g(eta) = theta |eta|^2
    time_dependent: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("scalar_point", "pair_degenerate_q2", "pair_degenerate_qgt2"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "pair_degenerate_q2" and self.theta < 0:
            raise ValueError("gap coefficient must be nonnegative")

    def gap_symbol(self, eta):
        if self.kind != "pair_degenerate_q2":
            return np.zeros_like(np.asarray(eta, dtype=float))
        return self.theta * np.asarray(eta, dtype=float) ** 2


@dataclass
class Profile:
    field: ms.WaveField        # slow profile on the x grid
    mass: float
    model: EffModel
    meta: dict = field(default_factory=dict)


# ---- windows ---------------------------------------------------------------------

def lowpass(eta, width):
    """1 on |eta| <= width, cos^2 taper to 0 at 1.5 width."""
    a = np.abs(np.asarray(eta, dtype=float))
    t = np.clip((a - width) / (0.5 * width), 0.0, 1.0)
    return np.cos(0.5 * np.pi * t) ** 2


def bump(x, center=0.0, radius=1.0):
    """Smooth compactly supported bump, 1 at the center."""
    s = (np.asarray(x, dtype=float) - center) / radius
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


# ---- profiles ----------------------------------------------------------------------

def local_gauge(fibers, n, center):
    """Phases p_r so that waves[:, :, n-1] * p_r is canonical at `center` and transported away from it."""
    c0 = fibers.waves[center, :, n - 1]
    canon = galerkin.gauge_fix(c0[:, None])[:, 0]
    ref = np.vdot(c0, canon)          # canon = ref * c0
    return fibers.transported_phases(n, center) * ref


def extract_profile_scalar(psi0, fibers, n, xi_c, width=DEFAULT_WIDTH, model=None):
    """Demodulated, low-passed mode-n content of psi0 around xi_c."""
    center, snap = fibers.node(xi_c)
    if snap > 1e-12:
        warnings.warn(f"xi_c={xi_c:g} snapped to the dual grid (distance {snap:.3g})")
    if 1.5 * width >= np.pi / psi0.eps:
        raise ValueError("low-pass window does not fit inside one Bloch cell")
    modes = ms.decompose(psi0, fibers, n)
    p = local_gauge(fibers, n, center)
    b = modes.b[n - 1] * np.conj(p)
    M = fibers.M
    j = np.arange(-(M // 2), M - M // 2)               # offsets from the center node
    nodes = (center + j) % M
    eta = 2 * np.pi * j / psi0.L
    G = np.zeros(psi0.N, dtype=complex)
    G[np.mod(j, psi0.N)] = b[nodes] * lowpass(eta, width)
    g = ms.WaveField.from_spectrum(G, psi0.L, psi0.eps, psi0.time)
    meta = {"eps": psi0.eps, "width": width, "snap": snap, "xi_c": float(fibers.zeta[center])}
    return Profile(g, g.norm2(), model, meta)


def critical_models(V, n_max, V_ext=None, K=32, time_dependent=False):
    """Scalar models at the pi-lattice critical points of bands 1..n_max (1-D).

    Membership follows the Hill discriminant classification; rho'' comes from the
    Galerkin sum rule.
    """
    from . import hill1d
    table = hill1d.band_table(V, n_max)
    out = []
    for n in range(1, n_max + 1):
        for p in hill1d.classify_pi_lattice(table, n):
            if p.kind != "critical":
                continue
            _, hess = galerkin.band_derivatives(V, p.xi, K, n)
            out.append(EffModel("scalar_point", p.xi, float(hess[n - 1, 0, 0]), n, V_ext,
                                time_dependent=time_dependent,
                                meta={"rho": p.rho, "rho_pp_hill": p.rho_pp}))
    return out


def profiles_for(psi0, fibers, models, width=DEFAULT_WIDTH, floor=MASS_FLOOR):
    """Profiles of psi0 for each model, keeping those with mass above the floor."""
    keep = []
    for m in models:
        pr = extract_profile_scalar(psi0, fibers, m.band, m.center, width, m)
        if pr.mass > floor:
            keep.append(pr)
    return keep


# ---- solvers -----------------------------------------------------------------------

def _kgrid(field_):
    return 2 * np.pi * sfft.fftfreq(field_.N, field_.dx)


def solve_scalar(model, profile, t_final, dt, observables=None, literal_sign=False):
    """Strang split-step for the scalar model; returns (times, observable series, final field)."""
    g0 = profile.field
    x, dx = g0.x, g0.dx
    k = _kgrid(g0)
    a = float(model.mass_matrix)
    sign = 1.0 if literal_sign else -1.0
    kin = np.exp(sign * 1j * dt * 0.5 * a * k ** 2)
    nsteps = int(round(t_final / dt))
    obs = {n: np.asarray(w, dtype=float) for n, w in (observables or {}).items()}
    v = g0.values.copy()
    times = [0.0]
    series = {n: [float(np.sum(w * np.abs(v) ** 2) * dx)] for n, w in obs.items()}
    mass = [g0.norm2()]
    half = None
    for i in range(nsteps):
        if model.V_ext is not None and (half is None or model.time_dependent):
            half = np.exp(-0.5j * dt * model.V_ext(g0.time + (i + 0.5) * dt, x) * np.ones_like(x))
        if half is not None:
            v = v * half
        v = sfft.ifft(kin * sfft.fft(v))
        if half is not None:
            v = v * half
        times.append((i + 1) * dt)
        rho = np.abs(v) ** 2
        mass.append(float(np.sum(rho) * dx))
        for n, w in obs.items():
            series[n].append(float(np.sum(w * rho) * dx))
    return (np.array(times), {n: np.array(s) for n, s in series.items()}, np.array(mass),
            g0.with_values(v, g0.time + nsteps * dt))


def predict_density(profiles, a, b, phi, dt, literal_sign=False):
    """Sum over profiles of int_a^b int phi |g_n(t, x)|^2 dx dt."""
    total = 0.0
    parts = []
    for pr in profiles:
        t, s, _, _ = solve_scalar(pr.model, pr, b, dt, {"phi": phi}, literal_sign)
        val = time_average(t, s["phi"], a, b)
        parts.append(val)
        total += val
    return total, parts


def pair_hamiltonian_parts(model, field_):
    """Fourier symbols (component 1, component 2) of the q=2 or q>2 pair kinetic part."""
    k = _kgrid(field_)
    lam = 0.5 * float(np.atleast_2d(model.mass_matrix)[0, 0]) * k ** 2
    g = model.gap_symbol(k)
    return lam - g, lam + g


def solve_pair(model, ensemble, grid, t_final, dt):
    """Evolve a purification ensemble [(w_j, u_j)] with u_j of shape (2, N).

    Returns the evolved ensemble and the trace history (sum_j w_j ||u_j||^2).
    """
    if model.kind == "scalar_point":
        raise ValueError("solve_pair needs a pair model")
    s1, s2 = pair_hamiltonian_parts(model, grid)
    kin = np.exp(-1j * dt * np.stack([s1, s2]))
    x = grid.x
    nsteps = int(round(t_final / dt))
    us = [np.array(u, dtype=complex) for _, u in ensemble]
    ws = np.array([w for w, _ in ensemble], dtype=float)
    if np.any(ws < 0):
        raise ValueError("ensemble weights must be nonnegative")
    trace = [float(sum(w * np.sum(np.abs(u) ** 2) * grid.dx for w, u in zip(ws, us)))]
    half = None
    for i in range(nsteps):
        if model.V_ext is not None and (half is None or model.time_dependent):
            half = np.exp(-0.5j * dt * model.V_ext(grid.time + (i + 0.5) * dt, x) * np.ones_like(x))
        for j, u in enumerate(us):
            if half is not None:
                u = u * half
            u = sfft.ifft(kin * sfft.fft(u, axis=1), axis=1)
            if half is not None:
                u = u * half
            us[j] = u
        trace.append(float(sum(w * np.sum(np.abs(u) ** 2) * grid.dx for w, u in zip(ws, us))))
    return list(zip(ws, us)), np.array(trace)


def ensemble_matrix(ensemble, dx):
    """Density matrix sum_j w_j |u_j><u_j| on C^2 x grid (u_j flattened component-major)."""
    n = ensemble[0][1].size
    Mt = np.zeros((n, n), dtype=complex)
    for w, u in ensemble:
        v = u.reshape(-1) * np.sqrt(dx)
        Mt += w * np.outer(v, np.conj(v))
    return Mt


def purify(Mt, dx, rtol=1e-12):
    """Eigen-decomposition of a PSD matrix into an ensemble of (weight, field) pairs."""
    Mt = 0.5 * (Mt + Mt.conj().T)
    w, v = np.linalg.eigh(Mt)
    keep = w > rtol * max(w.max(), 0)
    return [(float(wi), (vi / np.sqrt(dx)).reshape(2, -1)) for wi, vi in zip(w[keep], v[:, keep].T)]


def pair_hamiltonian_matrix(model, grid, t=0.0):
    """Dense Hamiltonian on C^2 x grid for the direct commutator check."""
    N = grid.N
    F = np.fft.fft(np.eye(N), axis=0)
    Finv = np.conj(F).T / N
    s1, s2 = pair_hamiltonian_parts(model, grid)
    v = np.zeros(N) if model.V_ext is None else model.V_ext(t, grid.x) * np.ones(N)
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    H[:N, :N] = Finv @ np.diag(s1) @ F + np.diag(v)
    H[N:, N:] = Finv @ np.diag(s2) @ F + np.diag(v)
    return H


def integrate_commutator(H, M0, t_final, dt):
    """RK4 for i dM/dt = [H, M] (reference integrator, static H)."""
    Mt = np.array(M0, dtype=complex)
    f = lambda A: -1j * (H @ A - A @ H)
    for _ in range(int(round(t_final / dt))):
        k1 = f(Mt)
        k2 = f(Mt + 0.5 * dt * k1)
        k3 = f(Mt + 0.5 * dt * k2)
        k4 = f(Mt + dt * k3)
        Mt = Mt + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Mt


# ---- interaction of two bands at a common quasimomentum ------------------------------

def truncated_gaussian(x, L, center=0.0, sigma=1.0, eta_cut=4.0):
    """Gaussian whose spectrum is multiplied by a smooth cutoff vanishing for |eta| >= eta_cut."""
    N = x.size
    k = 2 * np.pi * sfft.fftfreq(N, L / N)
    g = np.exp(-(x - center) ** 2 / (2 * sigma ** 2))
    G = sfft.fft(g) * lowpass(k, eta_cut / 1.5)
    out = sfft.ifft(G)
    return out / np.sqrt(np.sum(np.abs(out) ** 2) * (L / N))


@dataclass
class InteractionRow:
    eps: float
    overlap: complex
    predicted: complex


def well_prepared(fibers, L, eps, bands, xis, profiles, N):
    """psi0 = sum_j phi_{n_j}(x/eps, eps D) e^{i xi_j x/eps} Phi_j in the local gauge at xi_j.

    Each u_j must have its scaled spectrum inside the Bloch cell centred on xi_j.
    Carriers xi_j are snapped to the dual grid so the modulation is periodic.
    """
    M = fibers.M
    b = np.zeros((fibers.n_modes, M), dtype=complex)
    x = -L / 2 + (L / N) * np.arange(N)
    for n, xi, Phi in zip(bands, xis, profiles):
        xi = 2 * np.pi * np.rint(xi * M / (2 * np.pi)) / M    # carrier on the frequency grid
        u = ms.WaveField(np.exp(1j * xi * x / eps) * Phi, L, eps)
        F = u.spectrum()
        m = u.freq_index
        zeta = 2 * np.pi * m / M
        inside = np.abs(zeta - xi) < np.pi             # the Bloch cell centred on xi
        leak = float(np.sum(np.abs(F[~inside]) ** 2))
        if leak > 1e-20 * max(1.0, float(np.sum(np.abs(F) ** 2))):
            raise ValueError(f"data for band {n} leaves the first Bloch cell (mass {leak:.3g})")
        center, _ = fibers.node(xi)
        p = local_gauge(fibers, n, center)
        r_of = np.mod(m + M // 2, M)                   # position in fibers.r
        amp = np.zeros(M, dtype=complex)
        amp[r_of[inside]] = F[inside]
        b[n - 1] += p * amp
    return ms.modes_from_amplitudes(b, fibers, L, eps)


def interaction_overlap(psi0, fibers, n, sigma0, window, width):
    modes = ms.decompose(psi0, fibers)
    x = psi0.x
    demod = np.exp(-1j * sigma0 * x / psi0.eps)
    a = demod * ms.recompose(modes, [n]).values
    c = demod * ms.recompose(modes, [n + 1]).values
    k = 2 * np.pi * sfft.fftfreq(psi0.N, psi0.dx)
    a = sfft.ifft(sfft.fft(a) * lowpass(k, width))
    return complex(np.sum(window * a * np.conj(c)) * psi0.dx)


def interaction_offdiagonal(V, n, sigma0, xi1, xi2, eps_list, L=16.0, K=None, width=DEFAULT_WIDTH,
                            phi1=(0.0, 1.0), phi2=(0.5, 1.2), eta_cut=4.0, window=None,
                            zero_second=False, K_fiber=64):
    """Demodulated band n / n+1 overlap of well-prepared data versus the product formula."""
    window = window or (lambda x: np.exp(-x ** 2 / 8))
    c = galerkin.solve_fiber(V, sigma0, K_fiber, n + 1)
    c0 = c.waves[c.zero_row]
    rows = []
    for eps in eps_list:
        N = ms.default_points(L, eps)
        fib = ms.dual_fibers(V, L, eps, N, K)
        x = -L / 2 + (L / N) * np.arange(N)
        P1 = truncated_gaussian(x, L, *phi1, eta_cut)
        P2 = truncated_gaussian(x, L, *phi2, eta_cut) * (0.0 if zero_second else 1.0)
        modes = well_prepared(fib, L, eps, [n, n + 1], [xi1, xi2], [P1, P2], N)
        psi0 = ms.recompose(modes)
        w = window(x)
        ov = interaction_overlap(psi0, fib, n, sigma0, w, width)
        k = 2 * np.pi * sfft.fftfreq(N, L / N)
        P1s = sfft.ifft(sfft.fft(P1) * lowpass(k, width))
        pred = c0[n - 1] * np.conj(c0[n]) * complex(np.sum(w * P1s * np.conj(P2)) * (L / N))
        if xi1 != xi2:
            pred = 0j    # mismatched quasimomenta: the limit coherence vanishes
        rows.append(InteractionRow(eps, ov, pred))
    return rows
