"""Plane-wave Galerkin solver for the fiber operator P(xi) = |xi + D_y|^2/2 + V(y).

Basis e^{2 pi i k.y}, |k|_inf <= K, ordered lexicographically.  Dense Hermitian
eigensolves (LAPACK via numpy) are used throughout: fibers are at most a few
hundred dimensional.
"""
from dataclasses import dataclass, field

import numpy as np

GAUGE_TIE = 1e-9
LOW_OVERLAP = 0.5


class EigensolverError(RuntimeError):
    pass


def kgrid(dim, K):
    """Integer frequencies with |k|_inf <= K, lexicographic order, shape (n_k, dim)."""
    r = np.arange(-K, K + 1)
    if dim == 1:
        return r[:, None]
    g = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1)
    return g.reshape(-1, 2)


def potential_matrix(V, K):
    """Matrix of V_{k - k'} on the cutoff basis."""
    ks = kgrid(V.dim, K)
    n = len(ks)
    out = np.zeros((n, n), dtype=complex)
    if not V.coeffs:
        return out
    diff = ks[:, None, :] - ks[None, :, :]
    for q, a in V.coeffs.items():
        out[np.all(diff == np.array(q), axis=-1)] = a
    return out


def _xi_array(xi, dim):
    xi = np.asarray(xi, dtype=float)
    if dim == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    return xi


def kinetic_diag(xi, K, dim):
    ks = kgrid(dim, K)
    xi = _xi_array(xi, dim)
    p = xi[..., None, :] + 2 * np.pi * ks
    return 0.5 * np.sum(p ** 2, axis=-1)


def assemble(V, xi, K, vmat=None):
    """Hermitian Galerkin matrix; xi may carry leading batch axes."""
    if K < V.band_limit:
        raise ValueError(f"cutoff K={K} is below the potential band limit {V.band_limit}")
    if vmat is None:
        vmat = potential_matrix(V, K)
    diag = kinetic_diag(xi, K, V.dim)
    H = np.broadcast_to(vmat, diag.shape + (diag.shape[-1],)).copy()
    idx = np.arange(diag.shape[-1])
    H[..., idx, idx] += diag
    return H


def gauge_fix(waves, tie=GAUGE_TIE):
    """Canonical gauge: largest-modulus coefficient real positive, ties to the smallest k.

    waves has shape (..., n_k, n); columns are modes.  Returns a new array.
    """
    w = np.asarray(waves)
    a = np.abs(w)
    big = a.max(axis=-2, keepdims=True)
    cand = a >= big * (1 - tie)
    first = np.argmax(cand, axis=-2)
    piv = np.take_along_axis(w, first[..., None, :], axis=-2)
    ph = np.conj(piv) / np.abs(piv)
    return w * ph


@dataclass(frozen=True)
class BlochFiber:
    xi: np.ndarray
    energies: np.ndarray
    waves: np.ndarray        # (n_k, n) columns are c^n
    K: int
    kvecs: np.ndarray
    residuals: np.ndarray

    def coefficient(self, n, k):
        """c_k^n for band n (1-based) and frequency k."""
        k = np.atleast_1d(k)
        row = np.nonzero(np.all(self.kvecs == k, axis=1))[0]
        if not row.size:
            return 0.0
        return self.waves[row[0], n - 1]

    @property
    def zero_row(self):
        return int(np.nonzero(~np.any(self.kvecs, axis=1))[0][0])


def solve_fibers(V, xis, K, n_retained=None, vmat=None, with_waves=True):
    """Eigen-solve a batch of fibers.  Returns (energies, waves, residuals)."""
    H = assemble(V, xis, K, vmat)
    nk = H.shape[-1]
    n = nk if n_retained is None else int(n_retained)
    if n > nk:
        raise ValueError(f"n_retained={n} exceeds the basis size {nk}")
    try:
        if with_waves:
            w, c = np.linalg.eigh(H)
        else:
            return np.linalg.eigvalsh(H)[..., :n], None, None
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed in batch near xi={np.ravel(xis)[:3]}") from exc
    w, c = w[..., :n], gauge_fix(c[..., :n])
    res = np.linalg.norm(H @ c - c * w[..., None, :], axis=-2)
    return w, c, res


def solve_fiber(V, xi, K, n_retained=None):
    xi = _xi_array(xi, V.dim)
    w, c, res = solve_fibers(V, xi, K, n_retained)
    return BlochFiber(xi, w, c, K, kgrid(V.dim, K), res)


def band_derivatives(V, xi, K, n_bands):
    """Gradient and Hessian of rho_1..rho_n_bands at xi.

    Gradient by Hellmann-Feynman, Hessian by the second-order perturbation sum over
    all Galerkin states (the kinetic symbol has unit Hessian).  Degenerate levels give
    infinite entries, which are reported as nan.
    """
    xi = _xi_array(xi, V.dim)
    w, c, _ = solve_fibers(V, xi, K)
    ks = kgrid(V.dim, K)
    p = xi[..., None, :] + 2 * np.pi * ks          # (n_k, d)
    d = V.dim
    # momentum matrix elements <m|p_i|n>
    P = np.einsum("km,ki,kn->imn", np.conj(c), p, c)
    grad = np.real(np.einsum("inn->ni", P))[:n_bands]
    hess = np.zeros((n_bands, d, d))
    for n in range(n_bands):
        dw = w[n] - w
        with np.errstate(divide="ignore"):
            inv = np.where(np.arange(len(w)) == n, 0.0, 1.0 / dw)
        t = np.einsum("im,jm,m->ij", P[:, n, :], np.conj(P[:, n, :]), inv)
        hess[n] = np.eye(d) + 2 * np.real(t)
        if not np.all(np.isfinite(hess[n])):
            hess[n] = np.nan
    return grad, hess


def p4k_weight(V, xi, j, k_power, K=None):
    """||P(xi)^k e^{2 pi i j.y}||^2 through the Galerkin matrix."""
    if k_power not in (1, 2):
        raise ValueError("k_power must be 1 or 2")
    j = np.atleast_1d(np.asarray(j, dtype=int))
    if K is None:
        K = int(np.max(np.abs(j))) + k_power * max(V.band_limit, 1) + 1
    H = assemble(V, _xi_array(xi, V.dim), K)
    ks = kgrid(V.dim, K)
    e = np.all(ks == j, axis=1).astype(complex)
    if not e.any():
        raise ValueError("j lies outside the cutoff")
    v = e
    for _ in range(k_power):
        v = H @ v
    return float(np.real(np.vdot(v, v)))


# ---- grids of fibers ------------------------------------------------------------

def transport_line(waves, shifts=None):
    """Parallel-transport gauge along a line of fibers.

    waves: (m, n_k, n).  Each node is rotated so Re <c(i-1), c(i)> is maximal
    (i.e. the overlap is made real positive).  Returns (waves, |overlap|).  shifts
    optionally gives, per step, a callable realigning node i onto node i-1's
    basis (used when a line crosses the Brillouin-zone boundary).
    """
    w = np.array(waves)
    m = w.shape[0]
    ov = np.ones((m, w.shape[-1]))
    for i in range(1, m):
        cur = w[i] if shifts is None or shifts[i] is None else shifts[i](w[i])
        o = np.einsum("kn,kn->n", np.conj(w[i - 1]), cur)
        a = np.abs(o)
        ph = np.where(a > 0, np.conj(o) / np.where(a > 0, a, 1), 1.0)
        w[i] = w[i] * ph
        ov[i] = a
    return w, ov


@dataclass
class BandGrid:
    """Band energies tabulated on a uniform quasimomentum grid with one ghost layer.

    axes[i] are the node coordinates along dimension i (ghost nodes included), so
    energies has shape (*[len(a) for a in axes], n_retained).  ``evaluator`` maps an
    array of points (..., dim) to energies (..., n_retained) and is used to
    polish points off the grid.
    """
    dim: int
    axes: list
    energies: np.ndarray
    evaluator: object
    periodic: bool = True
    waves: np.ndarray = None
    low_overlap: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def n_retained(self):
        return self.energies.shape[-1]

    @property
    def spacing(self):
        return float(self.axes[0][1] - self.axes[0][0])

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def nodes(self):
        g = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(g, axis=-1)

    def band(self, n):
        return self.energies[..., n - 1]

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self.evaluator(pts))

    def interior_slices(self):
        return tuple(slice(1, len(a) - 1) for a in self.axes)

    @classmethod
    def from_function(cls, func, dim, lo, hi, resolution, n_bands=None, periodic=False, meta=None):
        """Tabulate user bands func(pts[..., dim]) -> (..., n_bands) on [lo, hi)^dim plus ghosts."""
        h = (hi - lo) / resolution
        ax = lo + h * np.arange(-1, resolution + 1)
        axes = [ax.copy() for _ in range(dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        e = np.asarray(func(pts), dtype=float)
        if e.ndim == dim:
            e = e[..., None]
        if n_bands is not None:
            e = e[..., :n_bands]
        return cls(dim, axes, e, func, periodic, meta=dict(meta or {}, source="function"))


def galerkin_evaluator(V, K, n_retained):
    vmat = potential_matrix(V, K)

    def ev(pts):
        pts = np.asarray(pts, dtype=float)
        if V.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        w, _, _ = solve_fibers(V, pts, K, n_retained, vmat, with_waves=False)
        return w
    return ev


def build_grid(V, n_retained, resolution, K=None, with_waves=True):
    """Fibers on [0, 2 pi)^d (one ghost node on each side) with a gauge continuity sweep."""
    if resolution < 16:
        raise ValueError("resolution must be at least 16 per dimension")
    if K is None:
        K = 16
    d = V.dim
    h = 2 * np.pi / resolution
    ax = h * np.arange(-1, resolution + 1)
    axes = [ax.copy() for _ in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vmat = potential_matrix(V, K)
    flat = pts.reshape(-1, d)
    es, ws = [], []
    for i in range(0, len(flat), 512):
        w, c, _ = solve_fibers(V, flat[i:i + 512], K, n_retained, vmat, with_waves)
        es.append(w)
        if with_waves:
            ws.append(c)
    energies = np.concatenate(es).reshape(pts.shape[:-1] + (n_retained,))
    grid = BandGrid(d, axes, energies, galerkin_evaluator(V, K, n_retained), True,
                    meta={"source": "galerkin", "K": K, "potential": V})
    if with_waves:
        waves = np.concatenate(ws).reshape(pts.shape[:-1] + ws[0].shape[1:])
        low = np.zeros(pts.shape[:-1] + (n_retained,), dtype=bool)
        if d == 1:
            waves, ov = transport_line(waves)
            low = ov < LOW_OVERLAP
        else:
            mid = len(ax) // 2
            col, ov = transport_line(waves[:, mid])
            waves[:, mid] = col
            low[:, mid] = ov < LOW_OVERLAP
            for i in range(len(ax)):
                row = waves[i]
                right, ov_r = transport_line(row[mid:])
                left, ov_l = transport_line(row[:mid + 1][::-1])
                waves[i, mid:] = right
                waves[i, :mid + 1] = left[::-1]
                low[i, mid:] |= ov_r < LOW_OVERLAP
                low[i, :mid + 1] |= (ov_l < LOW_OVERLAP)[::-1]
        grid.waves = waves
        grid.low_overlap = low
    return grid
