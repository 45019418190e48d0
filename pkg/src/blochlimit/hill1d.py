"""One-dimensional Floquet theory through the Hill discriminant.

The fundamental solutions of -f''/2 + V f = lam f on [0, 1] are integrated together
with their lam-derivatives, so Delta(lam) = tr M and Delta'(lam) come from one ODE
solve.  Many lam values are integrated as one vectorized system.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

DEFAULT_RTOL = 1e-13
CHUNK = 1024
TOUCH_TOL = 1e-7          # |Delta'| < TOUCH_TOL (1 + |Delta''|) at a root -> double root
VALUE_FLOOR = 1e-11       # extremum within this of +-2 is a touching point (Delta noise level)
DET_TOL = 1e-9            # Wronskian conservation, |det M - 1|


class IntegrationError(RuntimeError):
    pass


class IncompleteError(RuntimeError):
    """Not enough band edges were bracketed inside the lam budget."""


class InterlacingError(RuntimeError):
    pass


def _vfun(V):
    ks, vs = V._arrays()
    if len(vs) == 0:
        return lambda y: 0.0
    kk = 2 * np.pi * ks[:, 0].astype(float)
    re, im = vs.real.copy(), vs.imag.copy()

    def f(y):
        return float(re @ np.cos(kk * y) - im @ np.sin(kk * y))
    return f


def _integrate(V, lams, rtol=DEFAULT_RTOL, method="DOP853"):
    """Return M, dM of shape (n, 2, 2) for an array of lam values."""
    if V.dim != 1:
        raise ValueError("hill1d needs a one-dimensional potential")
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    n = lams.size
    vf = _vfun(V)

    def rhs(t, s):
        s = s.reshape(8, n)
        q = 2.0 * (vf(t) - lams)
        out = np.empty_like(s)
        out[0], out[2] = s[1], s[3]
        out[1], out[3] = q * s[0], q * s[2]
        out[4], out[6] = s[5], s[7]
        out[5] = q * s[4] - 2.0 * s[0]
        out[7] = q * s[6] - 2.0 * s[2]
        return out.ravel()

    s0 = np.zeros((8, n))
    s0[0] = 1.0
    s0[3] = 1.0
    kw = {}
    if method in ("Radau", "BDF", "LSODA"):
        kw["first_step"] = 1e-4
    sol = solve_ivp(rhs, (0.0, 1.0), s0.ravel(), method=method, rtol=rtol,
                    atol=rtol * 1e-2, t_eval=[1.0], **kw)
    if sol.status != 0:
        raise IntegrationError(f"monodromy integration failed for lam in "
                               f"[{lams.min():g}, {lams.max():g}]: {sol.message}")
    s = sol.y[:, -1].reshape(8, n)
    M = np.stack([np.stack([s[0], s[2]], -1), np.stack([s[1], s[3]], -1)], -2)
    dM = np.stack([np.stack([s[4], s[6]], -1), np.stack([s[5], s[7]], -1)], -2)
    return M, dM


def disc(V, lams, rtol=DEFAULT_RTOL, method="DOP853"):
    """Delta and Delta' at an array of lam values (batched)."""
    lams = np.asarray(lams, dtype=float)
    flat = lams.ravel()
    d = np.empty(flat.size)
    dp = np.empty(flat.size)
    for i in range(0, flat.size, CHUNK):
        M, dM = _integrate(V, flat[i:i + CHUNK], rtol, method)
        drift = np.abs(np.linalg.det(M) - 1)
        if drift.max() > DET_TOL:
            j = int(np.argmax(drift))
            raise IntegrationError(f"det M drifted by {drift[j]:.3g} at lam={flat[i + j]:g}")
        d[i:i + CHUNK] = M[:, 0, 0] + M[:, 1, 1]
        dp[i:i + CHUNK] = dM[:, 0, 0] + dM[:, 1, 1]
    return d.reshape(lams.shape), dp.reshape(lams.shape)


def disc_second(V, lams, rtol=DEFAULT_RTOL):
    """Delta'' by central differences of Delta' with h = 1e-4 (1 + |lam|)."""
    lams = np.asarray(lams, dtype=float)
    h = 1e-4 * (1 + np.abs(lams))
    _, up = disc(V, lams + h, rtol)
    _, dn = disc(V, lams - h, rtol)
    return (up - dn) / (2 * h)


@dataclass(frozen=True)
class Monodromy:
    lam: float
    M: np.ndarray
    dM_dlambda: np.ndarray

    @property
    def disc(self):
        return self.M[0, 0] + self.M[1, 1]

    @property
    def disc_prime(self):
        return self.dM_dlambda[0, 0] + self.dM_dlambda[1, 1]

    @property
    def det(self):
        return float(np.linalg.det(self.M))


def monodromy(V, lam, rtol=DEFAULT_RTOL, method="DOP853"):
    M, dM = _integrate(V, [lam], rtol, method)
    return Monodromy(float(lam), M[0], dM[0])


class ScanTable(NamedTuple):
    lam: np.ndarray
    delta: np.ndarray
    delta_prime: np.ndarray


def discriminant_scan(V, lambda_range, n_samples, rtol=DEFAULT_RTOL):
    lo, hi = lambda_range
    if not hi > lo or n_samples < 2:
        raise ValueError("need a nonempty lam range and at least two samples")
    lam = np.linspace(lo, hi, int(n_samples))
    d, dp = disc(V, lam, rtol)
    return ScanTable(lam, d, dp)


# ---- vectorized bracketed solvers -------------------------------------------

def _solve_level(V, lo, hi, target, increasing, rtol=DEFAULT_RTOL, maxit=100):
    """Solve Delta(x) = target on monotone brackets [lo, hi] by safeguarded Newton."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    target = np.broadcast_to(np.asarray(target, dtype=float), lo.shape).copy()
    sgn = np.where(np.broadcast_to(increasing, lo.shape), 1.0, -1.0)
    x = 0.5 * (lo + hi)
    done = np.zeros(lo.shape, dtype=bool)
    for _ in range(maxit):
        act = ~done
        if not act.any():
            break
        xa = x[act]
        d, dp = disc(V, xa, rtol)
        r = (d - target[act]) * sgn[act]
        la, ha = lo[act], hi[act]
        la = np.where(r < 0, xa, la)
        ha = np.where(r > 0, xa, ha)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - (d - target[act]) / dp
        bad = ~np.isfinite(xn) | (xn <= la) | (xn >= ha)
        xn = np.where(bad, 0.5 * (la + ha), xn)
        tol = 2e-15 * (1 + np.abs(xa))
        fin = (np.abs(xn - xa) < tol) | (ha - la < tol) | (r == 0)
        lo[act], hi[act] = la, ha
        x[act] = np.where(r == 0, xa, xn)
        done[act] = fin
    return x


def _solve_extremum(V, lo, hi, rtol=DEFAULT_RTOL, maxit=200):
    """Roots of Delta' on brackets with a sign change (vectorized Illinois)."""
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    if a.size == 0:
        return a
    _, fa = disc(V, a, rtol)
    _, fb = disc(V, b, rtol)
    done = (fa == 0) | (fb == 0)
    x = np.where(fa == 0, a, np.where(fb == 0, b, 0.5 * (a + b)))
    for _ in range(maxit):
        act = ~done
        if not act.any():
            break
        aa, bb, ffa, ffb = a[act], b[act], fa[act], fb[act]
        c = (aa * ffb - bb * ffa) / (ffb - ffa)
        c = np.where((c <= np.minimum(aa, bb)) | (c >= np.maximum(aa, bb)) | ~np.isfinite(c),
                     0.5 * (aa + bb), c)
        _, fc = disc(V, c, rtol)
        same = np.sign(fc) == np.sign(ffb)
        # Illinois: keep (b, fb) as latest; halve the stale end
        na = np.where(same, aa, bb)
        nfa = np.where(same, ffa * 0.5, ffb)
        a[act], fa[act] = na, nfa
        b[act], fb[act] = c, fc
        x[act] = c
        done[act] = (np.abs(b[act] - a[act]) < 1e-13 * (1 + np.abs(c))) | (fc == 0)
    return x


# ---- band edges ---------------------------------------------------------------

@dataclass(frozen=True)
class Edge:
    value: float
    sign: int            # +1 for Delta = 2, -1 for Delta = -2
    double: bool
    delta_prime: float   # Delta' at the root (0 reported for double roots)
    delta_pp: float
    margin: float        # distance from the touching threshold, in units of the threshold

    @property
    def marginal(self):
        return self.margin < 10.0


@dataclass(frozen=True)
class BandEdges:
    edges: np.ndarray
    info: tuple
    n_bands: int

    def interval(self, n):
        return self.edges[2 * n - 2], self.edges[2 * n - 1]

    @property
    def doubles(self):
        return np.array([e.double for e in self.info])


def _expected_sign(j):
    # a_1^+, a_1^-, a_2^-, a_2^+, a_3^+, ...
    return 1 if ((j + 1) // 2) % 2 == 0 else -1


def check_interlacing(edges, signs, doubles, tol=1e-9):
    for j, s in enumerate(signs):
        if s != _expected_sign(j):
            raise InterlacingError(f"edge {j} is a root of Delta = {2 * s}, expected {2 * _expected_sign(j)}")
    for j in range(len(edges) - 1):
        gap = edges[j + 1] - edges[j]
        scale = tol * (1 + abs(edges[j]))
        if j % 2 == 0:
            if not gap > 0:
                raise InterlacingError(f"band {j // 2 + 1} has zero width")
        else:
            if gap < -scale:
                raise InterlacingError(f"edges {j} and {j + 1} are out of order")
            if doubles[j] != doubles[j + 1]:
                raise InterlacingError(f"edges {j} and {j + 1} disagree on touching")


def band_edges(V, n_bands, rtol=DEFAULT_RTOL, touch_tol=TOUCH_TOL, value_floor=VALUE_FLOOR,
               max_lambda=None):
    """First 2*n_bands roots of Delta = +-2 in increasing order, touching pairs marked double."""
    if n_bands < 1:
        raise ValueError("n_bands must be at least 1")
    vmin, vmax = V.sample_extrema()
    start = vmin - 1.0
    if max_lambda is None:
        max_lambda = vmax + ((n_bands + 1) * np.pi) ** 2 / 2 + 10.0
    step = min(1.0, np.pi ** 2 / 4) / 4
    lam = np.arange(start, max_lambda + step, step)
    d, dp = disc(V, lam, rtol)

    # extrema of Delta
    pos = dp >= 0
    idx = np.nonzero(pos[:-1] != pos[1:])[0]
    xs = _solve_extremum(V, lam[idx], lam[idx + 1], rtol)
    dx, _ = disc(V, xs, rtol) if xs.size else (np.zeros(0), None)
    dpp = disc_second(V, xs, rtol) if xs.size else np.zeros(0)

    # monotone pieces between extrema; at most one root per level per piece
    bps = np.concatenate([[lam[0]], xs, [lam[-1]]])
    bvals = np.concatenate([[d[0]], dx, [d[-1]]])
    los, his, tgt, inc, piece = [], [], [], [], []
    for j in range(len(bps) - 1):
        a, b = bps[j], bps[j + 1]
        inside = np.nonzero((lam > a) & (lam < b))[0]
        pl = np.concatenate([[a], lam[inside], [b]])
        pv = np.concatenate([[bvals[j]], d[inside], [bvals[j + 1]]])
        for level in (2.0, -2.0):
            r = pv - level >= 0
            ch = np.nonzero(r[:-1] != r[1:])[0]
            if ch.size:
                c = ch[0]
                los.append(pl[c])
                his.append(pl[c + 1])
                tgt.append(level)
                inc.append(pv[-1] > pv[0])
                piece.append(j)
    los, his = np.array(los), np.array(his)
    roots = _solve_level(V, los, his, np.array(tgt), np.array(inc, dtype=bool), rtol) if los.size else los
    _, rdp = disc(V, roots, rtol) if roots.size else (None, np.zeros(0))
    rdpp = disc_second(V, roots, rtol) if roots.size else np.zeros(0)

    entries = []   # (value, sign, double, dp, dpp, margin)
    used = np.zeros(len(roots), dtype=bool)
    for i, x in enumerate(xs):
        s = 1 if dx[i] > 0 else -1
        excess = abs(dx[i]) - 2.0
        thr = touch_tol * (1 + abs(dpp[i]))
        efloor = max(value_floor, thr ** 2 / (2 * max(abs(dpp[i]), 1e-300)))
        adj = [k for k in range(len(roots))
               if tgt[k] == 2.0 * s and piece[k] in (i, i + 1) and not used[k]]
        near = [k for k in adj if abs(rdp[k]) < touch_tol * (1 + abs(rdpp[k]))]
        if excess < -efloor and not near:
            continue   # extremum strictly inside a band: not an edge
        if excess <= efloor or len(near) == len(adj) == 2:
            for k in adj:
                if abs(roots[k] - x) < 1e-3 * (1 + abs(x)) or k in near:
                    used[k] = True
            margin = efloor / max(abs(excess), 1e-300) if excess <= efloor else 1.0
            entries += [(x, s, True, 0.0, dpp[i], margin)] * 2
    for k in range(len(roots)):
        if used[k]:
            continue
        thr = touch_tol * (1 + abs(rdpp[k]))
        entries.append((roots[k], int(tgt[k] / 2), False, rdp[k], rdpp[k], abs(rdp[k]) / thr))
    entries.sort(key=lambda e: e[0])
    if len(entries) < 2 * n_bands:
        raise IncompleteError(f"found {len(entries)} edges below lam = {max_lambda:g}, "
                              f"need {2 * n_bands}")
    entries = entries[:2 * n_bands]
    edges = np.array([e[0] for e in entries])
    info = tuple(Edge(float(e[0]), int(e[1]), bool(e[2]), float(e[3]), float(e[4]), float(e[5]))
                 for e in entries)
    check_interlacing(edges, [e.sign for e in info], [e.double for e in info])
    return BandEdges(edges, info, n_bands)


# ---- band functions -------------------------------------------------------------

class BandValue(NamedTuple):
    rho: np.ndarray
    rho_p: np.ndarray
    rho_pp: np.ndarray
    touching: np.ndarray   # True where the endpoint is a double root; derivatives are nan there


@dataclass
class BandTable1D:
    V: object
    edges: BandEdges
    rtol: float = DEFAULT_RTOL
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_bands(self):
        return self.edges.n_bands

    def interval(self, n):
        self._check(n)
        return self.edges.interval(n)

    def _check(self, n):
        if not 1 <= n <= self.n_bands:
            raise ValueError(f"band {n} outside 1..{self.n_bands}")

    def endpoint_edge(self, n, k):
        """Index of the edge equal to rho_n(k pi), k in {0, 1}."""
        self._check(n)
        lower = 2 * n - 2
        if (n % 2 == 1) == (k % 2 == 0):
            return lower
        return lower + 1

    def lambda_crit(self, n):
        return tuple(self.edges.edges[self.endpoint_edge(n, k)] for k in (0, 1))

    def band_value(self, n, xi):
        """rho_n, rho_n', rho_n'' at quasimomenta xi.

        n and xi broadcast together, so several bands are solved in one batch.
        """
        n, xi = np.broadcast_arrays(np.asarray(n, dtype=int), np.asarray(xi, dtype=float))
        shape = xi.shape
        n = n.ravel()
        for m in np.unique(n):
            self._check(int(m))
        x = np.mod(xi.ravel(), 2 * np.pi)
        flip = x > np.pi
        x = np.where(flip, 2 * np.pi - x, x)
        e = self.edges.edges
        lo, hi = e[2 * n - 2], e[2 * n - 1]
        i0 = np.array([self.endpoint_edge(int(m), 0) for m in n], dtype=int)
        ipi = np.array([self.endpoint_edge(int(m), 1) for m in n], dtype=int)
        rho = np.empty(x.size)
        at0 = x == 0
        atpi = x == np.pi
        interior = ~(at0 | atpi)
        rho[at0] = e[i0[at0]]
        rho[atpi] = e[ipi[atpi]]
        if interior.any():
            rho[interior] = _solve_level(self.V, lo[interior], hi[interior], 2 * np.cos(x[interior]),
                                         n[interior] % 2 == 0, self.rtol)
        dbl = np.array([i.double for i in self.edges.info])
        touching = (at0 & dbl[i0]) | (atpi & dbl[ipi])
        h = 1e-4 * (1 + np.abs(rho))
        _, dps = disc(self.V, np.concatenate([rho, rho + h, rho - h]), self.rtol)
        dp, up, dn = np.split(dps, 3)
        dpp = (up - dn) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            rp = np.where(interior, -2 * np.sin(x) / dp, 0.0)
            rpp = (-2 * np.cos(x) - dpp * rp ** 2) / dp
        rp = np.where(touching, np.nan, rp)
        rpp = np.where(touching, np.nan, rpp)
        rp = np.where(flip, -rp, rp)
        return BandValue(rho.reshape(shape), rp.reshape(shape), rpp.reshape(shape), touching.reshape(shape))

    def rho(self, n, xi):
        return self.band_value(n, xi).rho


def band_table(V, n_bands, rtol=DEFAULT_RTOL, **kw):
    """Band table for bands 1..n_bands (edges of band n_bands + 1 are computed too)."""
    e = band_edges(V, n_bands + 1, rtol=rtol, **kw)
    return BandTable1D(V, e, rtol)


@dataclass(frozen=True)
class PiPoint:
    k: int
    xi: float
    kind: str             # "critical" or "crossing"
    rho: float
    delta_prime: float
    rho_pp: float         # 2 (-1)^(k+1) / Delta' for critical points, nan for crossings
    partner: int          # band touching at a crossing (0 if none)
    marginal: bool


def classify_pi_lattice(table, n):
    """Split the representatives {0, pi} into critical points of rho_n and crossings."""
    table._check(n)
    out = []
    for k in (0, 1):
        j = table.endpoint_edge(n, k)
        e = table.edges.info[j]
        if e.double:
            partner = n + 1 if j % 2 == 1 else n - 1
            out.append(PiPoint(k, k * np.pi, "crossing", e.value, 0.0, np.nan, partner, e.marginal))
        else:
            rpp = 2 * (-1) ** (k + 1) / e.delta_prime
            out.append(PiPoint(k, k * np.pi, "critical", e.value, e.delta_prime, rpp, 0, e.marginal))
    return out

