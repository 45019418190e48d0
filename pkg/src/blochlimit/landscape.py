"""Critical points, crossings and their classification on tabulated bands.

Everything here works on a ``BandGrid`` (Galerkin-built or synthetic) through
finite differences on the nodes plus polishing through the grid's evaluator.
Band n is 1-based.  Tolerances are relative to an energy scale, taken as the
largest |rho| of the bands involved (at least 1).

Verdicts are evidence from finitely many samples, never certificates.
"""
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage, optimize

GRAD_TOL = 1e-6
GAP_TOL = 1e-8
RANK_TOL = 1e-6
EPS_MACH = np.finfo(float).eps


@dataclass
class Verdict:
    status: str                 # holds | fails | untestable
    witness: object = None
    detail: str = ""
    margin: float = None

    def __str__(self):
        s = self.status
        if self.witness is not None:
            s += f" (witness {self.witness})"
        return s


@dataclass
class CriticalCluster:
    band: int
    nodes: list
    point: np.ndarray
    grad_norm: float
    hessian: np.ndarray = None
    rank: int = None
    singular_values: np.ndarray = None
    component: int = 0
    polished: bool = True
    rank_verdict: str = "constant"
    oracle: bool = None


@dataclass
class CrossingClass:
    kind: str                   # conical | degenerate | unresolved
    q: int = None
    q_fit: float = float("nan")
    c: float = float("nan")
    slopes: np.ndarray = None
    normals: np.ndarray = None
    radii: np.ndarray = None
    reason: str = ""


@dataclass
class CrossingCluster:
    band: int
    nodes: list
    point: np.ndarray
    gap: float
    tangent_dim: int = 0
    tangent: np.ndarray = None
    normals: np.ndarray = None
    component: int = 0
    classification: CrossingClass = None
    triple: bool = False


@dataclass
class NormalForm:
    sigma: np.ndarray
    eta: np.ndarray             # (m, d) offsets from sigma
    lam: np.ndarray
    gap: np.ndarray             # g = (rho_{n+1} - rho_n) / (1 + m), here m = 1
    hess_lambda: np.ndarray
    multiplicity_ratio: int
    degree: float
    theta: np.ndarray = None    # per direction, only for quadratic contact
    residual: float = 0.0


@dataclass
class LandscapeReport:
    critical: dict = field(default_factory=dict)
    crossings: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self):
        def conv(o):
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, (np.floating, np.integer, np.bool_)):
                return o.item()
            if isinstance(o, dict):
                return {str(k): conv(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [conv(v) for v in o]
            if hasattr(o, "__dataclass_fields__"):
                return conv(asdict(o))
            if isinstance(o, float) and not np.isfinite(o):
                return None
            return o
        return conv({"critical": self.critical, "crossings": self.crossings,
                     "verdicts": self.verdicts, "tolerances": self.tolerances, "meta": self.meta})


# ---- helpers -----------------------------------------------------------------------

def energy_scale(grid, bands):
    lo, hi = min(bands), max(bands)
    e = grid.energies[..., lo - 1:hi]
    return max(1.0, float(np.max(np.abs(e))))


def _band_fn(source, n):
    """Scalar function pts(..., d) -> rho_n for a BandGrid or a callable pair/band function."""
    if hasattr(source, "evaluate"):
        return lambda pts: source.evaluate(pts)[..., n - 1]
    return lambda pts: np.asarray(source(pts))[..., n - 1]


def _pair_fn(source, n=1):
    """(rho_n, rho_{n+1}) from a BandGrid, or a callable already returning the pair."""
    if hasattr(source, "evaluate"):
        return lambda pts: source.evaluate(pts)[..., n - 1:n + 1]
    return lambda pts: np.asarray(source(pts))[..., :2]


def fd_gradient(f, p, step):
    p = np.asarray(p, dtype=float)
    d = p.size
    E = np.eye(d) * step
    vals = f(np.concatenate([p + E, p - E]))
    return (vals[:d] - vals[d:]) / (2 * step)


def _hess_once(f, p, step):
    d = p.size
    E = np.eye(d) * step
    pts = [p]
    for i in range(d):
        pts += [p + E[i], p - E[i]]
    for i in range(d):
        for j in range(i + 1, d):
            pts += [p + E[i] + E[j], p + E[i] - E[j], p - E[i] + E[j], p - E[i] - E[j]]
    v = f(np.array(pts))
    H = np.zeros((d, d))
    f0 = v[0]
    for i in range(d):
        H[i, i] = (v[1 + 2 * i] - 2 * f0 + v[2 + 2 * i]) / step ** 2
    k = 1 + 2 * d
    for i in range(d):
        for j in range(i + 1, d):
            a, b, c, e = v[k:k + 4]
            H[i, j] = H[j, i] = (a - b - c + e) / (4 * step ** 2)
            k += 4
    return H


def fd_hessian(f, p, step, rtol=1e-7, min_step=1e-5):
    """Symmetric central-difference Hessian with one Richardson step.

    The step is quartered until two successive estimates agree to rtol, which
    copes with sharply curved bands next to narrow gaps.
    """
    p = np.asarray(p, dtype=float)
    rich = lambda s: (4 * _hess_once(f, p, s / 2) - _hess_once(f, p, s)) / 3
    H = rich(step)
    last = np.inf
    while step / 4 >= min_step:
        step /= 4
        H2 = rich(step)
        diff = np.max(np.abs(H2 - H))
        if diff <= rtol * max(1.0, np.max(np.abs(H2))):
            return H2
        if diff > last:         # rounding now dominates
            return H
        H, last = H2, diff
    return H


def _interior(grid, arr):
    return arr[grid.interior_slices()]


def _central(grid, E):
    """Central-difference gradient (interior nodes, shape (*interior, d)) from ghosted data."""
    h = grid.spacing
    d = grid.dim
    sl = grid.interior_slices()
    out = []
    for ax in range(d):
        up = list(sl)
        dn = list(sl)
        up[ax] = slice(2, None)
        dn[ax] = slice(None, -2)
        out.append((E[tuple(up)] - E[tuple(dn)]) / (2 * h))
    return np.stack(out, axis=-1)


def _neighbour_range(grid, a, ax):
    """Min and max of a over the node and its two neighbours along axis ax."""
    if grid.periodic:
        nb = [np.roll(a, 1, axis=ax), a, np.roll(a, -1, axis=ax)]
    else:
        pad = [(0, 0)] * a.ndim
        pad[ax] = (1, 1)
        b = np.pad(a, pad, mode="edge")
        nb = [np.take(b, np.arange(k, k + a.shape[ax]), axis=ax) for k in range(3)]
    return np.min(nb, axis=0), np.max(nb, axis=0)


def _clusters(grid, mask):
    """Group adjacent candidate nodes; on periodic grids groups touching opposite faces merge."""
    lab, nlab = ndimage.label(mask, structure=np.ones((3,) * grid.dim))
    parent = list(range(nlab + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if grid.periodic:
        for ax in range(grid.dim):
            first = np.take(lab, 0, axis=ax)
            last = np.take(lab, -1, axis=ax)
            for a, b in zip(first.ravel(), last.ravel()):
                if a and b:
                    parent[find(a)] = find(b)
    groups = {}
    for k in range(1, nlab + 1):
        groups.setdefault(find(k), []).append(k)
    out = []
    for i, ks in enumerate(groups.values()):
        nodes = [tuple(int(j) for j in ix) for ix in np.argwhere(np.isin(lab, ks))]
        out.append((nodes, i))
    return out


def _node_point(grid, idx):
    # interior index -> coordinates (interior starts one node after the ghost)
    return np.array([grid.axes[a][i + 1] for a, i in enumerate(idx)])


def _cluster_points(grid, nodes, ref):
    """Node coordinates, unwrapped to the periodic image nearest ref."""
    pts = np.array([_node_point(grid, ix) for ix in nodes])
    if grid.periodic:
        period = grid.spacing * (len(grid.axes[0]) - 2)
        pts = pts - period * np.round((pts - ref) / period)
    return pts


def _is_kink(f, p, delta):
    """True if rho has a corner at p along some axis (one-sided slopes do not shrink with delta)."""
    p = np.asarray(p, dtype=float)
    d = p.size
    f0 = f(p[None])[0]
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = 1
        jumps = []
        for s in (delta, delta / 4):
            v = f(np.array([p + s * e, p - s * e]))
            jumps.append(abs((v[0] - f0) / s + (v[1] - f0) / s))
        if jumps[0] > 1e-6 and jumps[1] > 0.5 * jumps[0]:
            return True
    return False


def _near_crossing(grid, n, p, tol):
    e = grid.evaluate(np.asarray(p, dtype=float)[None])[0]
    gaps = []
    if n > 1:
        gaps.append(e[n - 1] - e[n - 2])
    if n < len(e):
        gaps.append(e[n] - e[n - 1])
    return bool(gaps) and min(gaps) < tol


def _newton(f, p0, h, tol, rank_tol, maxit=40):
    """Damped Newton on the finite-difference gradient.  Returns (p, |grad|, ok)."""
    dg = min(1e-5, h / 8)
    dh = min(h, 0.02)
    p = np.asarray(p0, dtype=float)
    g = fd_gradient(f, p, dg)
    for _ in range(maxit):
        if np.linalg.norm(g) < tol * 1e-2:
            break
        H = _hess_once(f, p, dh)
        step = -np.linalg.lstsq(H, g, rcond=rank_tol)[0]
        if np.linalg.norm(step) < 1e-12 * h:
            break
        for _ in range(6):
            q = p + step
            gq = fd_gradient(f, q, dg)
            if np.linalg.norm(gq) < np.linalg.norm(g):
                break
            step = step / 2
        else:
            break
        if np.linalg.norm(q - p0) > 2 * h * np.sqrt(p.size):
            return q, float(np.linalg.norm(gq)), False
        p, g = q, gq
    return p, float(np.linalg.norm(g)), True


def _rank(H, rank_tol):
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] == 0:
        return 0, s, False
    rel = s / s[0]
    r = int(np.sum(rel > rank_tol))
    borderline = bool(np.any((rel > rank_tol / 10) & (rel < rank_tol * 10)))
    return r, s, borderline


# ---- critical points ---------------------------------------------------------------

def find_critical(grid, n, grad_tol=None, rank_tol=RANK_TOL, oracle=None):
    """Clusters of Lambda_n.  grad_tol defaults to GRAD_TOL * energy scale.

    Nodes where every gradient component changes sign within one cell are
    candidates; each cluster is polished by damped Newton from its best node.
    Corners (crossing points where one-sided slopes disagree) are not critical.
    Clusters whose Newton iteration stalls above grad_tol inside the cell are
    dropped; those that leave the cell are kept with polished=False.
    In 1-D, ``oracle`` (a hill1d BandTable1D) cross-checks the pi lattice.
    """
    scale = energy_scale(grid, [n])
    tol = GRAD_TOL * scale if grad_tol is None else grad_tol
    E = grid.band(n)
    grad = _central(grid, E)
    G = np.linalg.norm(grad, axis=-1)
    h = grid.spacing
    mask = np.ones(G.shape, dtype=bool)
    for ax in range(grid.dim):
        lo, hi = _neighbour_range(grid, grad[..., ax], ax)
        mask &= (lo <= tol) & (hi >= -tol)
    f = _band_fn(grid, n)
    out = []
    for nodes, comp in _clusters(grid, mask):
        best = min(nodes, key=lambda ix: G[ix])
        p0 = _node_point(grid, best)
        p, gn, ok = _newton(f, p0, h, tol, rank_tol)
        if ok and gn >= tol:
            continue
        if ok and _near_crossing(grid, n, p, GAP_TOL * scale) and _is_kink(f, p, min(1e-3, h / 4)):
            continue
        cl = CriticalCluster(n, nodes, p, gn, component=comp, polished=ok)
        hessian_rank(grid, cl, rank_tol)
        out.append(cl)
    _rank_constancy(grid, out, rank_tol, tol)
    if oracle is not None and grid.dim == 1:
        check_against_hill(out, oracle, n)
    return out


def _hessian(grid, n, p):
    """Sum-rule Hessian on Galerkin grids, finite differences otherwise."""
    V = grid.meta.get("potential")
    if V is not None:
        from .galerkin import band_derivatives
        _, H = band_derivatives(V, np.asarray(p, dtype=float), grid.meta["K"], n)
        if np.all(np.isfinite(H[n - 1])):
            return H[n - 1]
    H = fd_hessian(_band_fn(grid, n), p, min(grid.spacing, 0.02))
    return 0.5 * (H + H.T)


def hessian_rank(grid, cluster, rank_tol=RANK_TOL):
    """Finite-difference Hessian at the representative, its numerical rank and singular values."""
    H = _hessian(grid, cluster.band, cluster.point)
    r, s, border = _rank(H, rank_tol)
    cluster.hessian, cluster.rank, cluster.singular_values = H, r, s
    if border:
        cluster.rank_verdict = "unresolved"
    return H, r, cluster.rank_verdict


def _rank_constancy(grid, clusters, rank_tol, tol, max_nodes=8):
    """Re-evaluate the rank at up to max_nodes polished nodes per component."""
    f = None
    by_comp = {}
    for c in clusters:
        by_comp.setdefault(c.component, []).append(c)
    for comp, cs in by_comp.items():
        ranks = set()
        border = False
        for c in cs:
            f = _band_fn(grid, c.band)
            ranks.add(c.rank)
            nodes = c.nodes
            tan, _ = _tangent(grid, _cluster_points(grid, nodes, c.point))
            if len(tan):                # only extended clusters carry a rank profile
                pick = np.linspace(0, len(nodes) - 1, min(max_nodes, len(nodes))).astype(int)
                for i in pick:
                    p, gn, ok = _newton(f, _node_point(grid, nodes[i]), grid.spacing, tol, rank_tol)
                    if not ok or gn >= tol:
                        continue
                    r, _, b = _rank(_hessian(grid, c.band, p), rank_tol)
                    ranks.add(r)
                    border |= b
        verdict = "unresolved" if border else ("constant" if len(ranks) == 1 else "varies")
        for c in cs:
            if c.rank_verdict != "unresolved":
                c.rank_verdict = verdict


def check_against_hill(clusters, table, n, tol=1e-5):
    """Compare 1-D critical clusters with the discriminant classification of {0, pi}.

    Every point the discriminant calls critical must be found.  Points it calls
    crossings are below its resolution when the grid still sees a gap, so those
    clusters are marked oracle=None instead of failing.
    """
    from .hill1d import classify_pi_lattice
    pts = classify_pi_lattice(table, n)
    got = [(c, float(np.mod(c.point[0] + tol, 2 * np.pi) - tol)) for c in clusters]
    for p in pts:
        hit = [c for c, x in got if abs(x - p.xi) < tol]
        if p.kind == "critical" and not hit:
            raise ValueError(f"band {n}: critical point {p.xi} from the discriminant not found on the grid")
        for c in hit:
            c.oracle = True if p.kind == "critical" else None
    for c, x in got:
        if not any(abs(x - p.xi) < tol for p in pts):
            raise ValueError(f"band {n}: grid critical point {x} is off the pi lattice")
    return True


# ---- crossings ---------------------------------------------------------------------

def _tangent(grid, pts):
    """Tangent directions of a cluster from the spread of its node cloud."""
    d = grid.dim
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return np.zeros((0, d)), np.eye(d)
    c = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(c, full_matrices=True)
    s = np.concatenate([s, np.zeros(d - len(s))]) / np.sqrt(len(pts))
    k = int(np.sum(s > grid.spacing))
    return vt[:k], vt[k:]


def _polish_gap(pair, p0, h):
    gapf = lambda p: float(np.diff(pair(np.atleast_2d(p)), axis=-1)[0, 0])
    if p0.size == 1:
        r = optimize.minimize_scalar(lambda t: gapf(np.array([t])), bounds=(p0[0] - h, p0[0] + h),
                                     method="bounded", options={"xatol": 1e-14})
        return np.array([r.x]), gapf(np.array([r.x]))
    simplex = np.vstack([p0, p0 + h * np.eye(p0.size)])
    r = optimize.minimize(gapf, p0, method="Nelder-Mead",
                          options={"initial_simplex": simplex, "xatol": 1e-14, "fatol": 1e-16,
                                   "maxiter": 4000})
    return r.x, gapf(r.x)


def find_crossings(grid, n, gap_tol=None, classify=True):
    """Clusters of Sigma_n, i.e. where rho_{n+1} - rho_n falls below gap_tol."""
    if grid.n_retained < n + 1:
        raise ValueError(f"grid holds {grid.n_retained} bands, need {n + 1}")
    scale = energy_scale(grid, [n, n + 1])
    tol = GAP_TOL * scale if gap_tol is None else gap_tol
    D = grid.band(n + 1) - grid.band(n)
    Di = _interior(grid, D)
    slope = np.linalg.norm(_central(grid, D), axis=-1)
    h = grid.spacing
    mask = Di <= np.sqrt(grid.dim) * h * slope + tol
    pair = _pair_fn(grid, n)
    out = []
    for nodes, comp in _clusters(grid, mask):
        best = min(nodes, key=lambda ix: Di[ix])
        p, gap = _polish_gap(pair, _node_point(grid, best), h)
        if gap >= tol:
            continue
        core = _cluster_points(grid, [ix for ix in nodes if Di[ix] <= max(tol, 0.75 * h * slope[ix])], p)
        tan, nor = _tangent(grid, core)
        cl = CrossingCluster(n, nodes, p, gap, len(tan), tan, nor, comp)
        if grid.n_retained >= n + 2:
            e = grid.evaluate(p[None])[0]
            cl.triple = bool(e[n + 1] - e[n - 1] < tol or (n > 1 and e[n - 1] - e[n - 2] < tol))
        if classify:
            cl.classification = classify_crossing(grid, p, n, normals=nor, r0=h / 2, gap_tol=tol)
        out.append(cl)
    return out


def normal_fan(normals, d):
    """Unit directions spanning the normal space: +-v for one normal, 8 for a plane."""
    N = np.atleast_2d(np.asarray(normals, dtype=float)) if normals is not None else np.eye(d)
    if N.shape[0] == 1:
        return np.vstack([N[0], -N[0]])
    ang = np.arange(8) * np.pi / 4
    dirs = np.cos(ang)[:, None] * N[0] + np.sin(ang)[:, None] * N[1]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def classify_crossing(source, sigma, n=1, normals=None, r0=None, J=8, gap_tol=None, retries=4):
    """Conical / degenerate(q) / unresolved from log-log fits of the gap along normal rays.

    source is a BandGrid (bands n, n+1 are used) or a callable mapping points
    (..., d) to the pair (rho_n, rho_{n+1}) in its last axis.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    d = sigma.size
    pair = _pair_fn(source, n)
    fan = normal_fan(normals, d)
    if r0 is None:
        r0 = source.spacing / 2 if hasattr(source, "spacing") else 0.1
    base = pair(sigma[None])[0]
    scale = max(1.0, float(np.max(np.abs(base))))
    floor = 1e3 * EPS_MACH * scale
    if gap_tol is not None:
        floor = max(floor, gap_tol)
    for _ in range(retries + 1):
        radii = r0 / 2.0 ** np.arange(J + 1)
        pts = sigma + radii[None, :, None] * fan[:, None, :]
        e = pair(pts.reshape(-1, d)).reshape(len(fan), len(radii), 2)
        gaps = e[..., 1] - e[..., 0]
        if np.all(np.diff(gaps, axis=1) <= 1e-12 * scale):
            break
        r0 /= 2
    else:
        return CrossingClass("unresolved", normals=fan, reason="gap not monotone along rays")
    slopes, cs = [], []
    for g in gaps:
        keep = g > floor
        if keep.sum() < 3:
            return CrossingClass("unresolved", normals=fan, radii=radii, reason="gap at noise floor")
        slopes.append(np.polyfit(np.log(radii[keep]), np.log(g[keep]), 1)[0])
        cs.append(np.min(g[keep] / radii[keep]))
    slopes = np.array(slopes)
    qf = float(slopes.max())
    if np.all((slopes >= 0.9) & (slopes <= 1.1)):
        return CrossingClass("conical", 1, qf, float(min(cs)), slopes, fan, radii)
    q = int(round(qf))
    if q >= 2 and np.all(np.abs(slopes - q) <= 0.1):
        c = float(min(np.min(g[g > floor] / radii[g > floor] ** q) for g in gaps))
        return CrossingClass("degenerate", q, qf, c, slopes, fan, radii)
    return CrossingClass("unresolved", None, qf, float("nan"), slopes, fan, radii,
                         reason="ray slopes do not cluster at an integer")


# ---- hypotheses --------------------------------------------------------------------

def _lambda_fn(pair):
    return lambda pts: 0.5 * np.sum(pair(pts), axis=-1)


def _eta_gradient(pair, sigma, eta, q, r, step=1e-2):
    """Gradient in eta of the homogeneous limit g(sigma, eta) ~ g(sigma + r eta) / r^q."""
    G = lambda et: 0.5 * np.diff(pair(sigma + r * et), axis=-1)[..., 0] / r ** q
    return fd_gradient(G, eta, step)


def _crossing_min_norm(pair, sigma, fan, q, r, lin):
    """min over fan and signs of |lin(eta) +- grad_eta g(sigma, eta)|."""
    best, wit = np.inf, None
    for eta in fan:
        ge = _eta_gradient(pair, sigma, eta, q, r)
        for sgn in (1, -1):
            v = np.linalg.norm(lin(eta) + sgn * ge)
            if v < best:
                best, wit = v, (sigma.tolist(), eta.tolist(), sgn)
    return best, wit


def audit_hypotheses(grid, n, crit=None, crossings=None, grad_tol=None, gap_tol=None,
                     rank_tol=RANK_TOL):
    """Verdicts for H1-H3 and, when every crossing is critical for both bands, H1'-H3'."""
    scale = energy_scale(grid, [n, min(n + 1, grid.n_retained)])
    gtol = GRAD_TOL * scale if grad_tol is None else grad_tol
    ctol = GAP_TOL * scale if gap_tol is None else gap_tol
    if crit is None:
        crit = find_critical(grid, n, gtol, rank_tol)
    if crossings is None:
        crossings = find_crossings(grid, n, ctol) if grid.n_retained > n else []
    v = {}
    # H1
    if grid.n_retained < n + 2:
        v["H1"] = Verdict("untestable", detail="needs band n+2 on the grid")
    else:
        bad = [c for c in crossings if c.triple]
        v["H1"] = Verdict("fails", bad[0].point.tolist(), "three bands meet") if bad else Verdict("holds")
    # H2
    v["H2"] = _h2(crit)
    # H3
    h = grid.spacing
    pair = _pair_fn(grid, n)
    lam = _lambda_fn(pair)
    if not crossings:
        v["H3"] = Verdict("holds", detail="no crossings")
    else:
        v["H3"] = Verdict("holds")
        worst = np.inf
        for c in crossings:
            cls = c.classification
            if cls is None or cls.kind != "conical":
                v["H3"] = Verdict("fails", c.point.tolist(),
                                  f"crossing is {cls.kind if cls else 'unclassified'}, not conic")
                break
            glam = fd_gradient(lam, c.point, min(1e-4, h / 8))
            m, wit = _crossing_min_norm(pair, c.point, normal_fan(c.normals, grid.dim), 1,
                                        h / 64, lambda eta: glam)
            worst = min(worst, m)
            if m < gtol:
                v["H3"] = Verdict("fails", wit, "gradient condition vanishes", m)
                break
        if v["H3"].status == "holds":
            v["H3"].margin = worst
    # primed hypotheses
    v.update(_primed(grid, n, crossings, gtol, ctol, rank_tol, pair, lam))
    return v


def _h2(crit):
    if not crit:
        return Verdict("holds", detail="no critical points")
    for c in crit:
        if c.rank_verdict == "varies":
            return Verdict("fails", c.point.tolist(), "Hessian rank varies on a component")
    for c in crit:
        if c.rank_verdict == "unresolved":
            return Verdict("untestable", c.point.tolist(), "near-rank-deficient Hessian")
    return Verdict("holds")


def _primed(grid, n, crossings, gtol, ctol, rank_tol, pair, lam):
    names = ("H1'", "H2'", "H3'")
    if not crossings:
        return {k: Verdict("untestable", detail="no crossings") for k in names}
    h = grid.spacing
    for c in crossings:
        for b in (n, n + 1):
            f = _band_fn(grid, b)
            g = np.linalg.norm(fd_gradient(f, c.point, min(1e-4, h / 8)))
            if g >= gtol or _is_kink(f, c.point, min(1e-3, h / 4)):
                return {k: Verdict("untestable", detail="crossings are not critical for both bands")
                        for k in names}
    v = {}
    bad = [c for c in crossings if c.triple]
    others = []
    if n > 1:
        others += find_crossings(grid, n - 1, ctol, classify=False)
    if grid.n_retained >= n + 2:
        others += find_crossings(grid, n + 1, ctol, classify=False)
    if bad:
        v["H1'"] = Verdict("fails", bad[0].point.tolist(), "three bands meet")
    elif others:
        v["H1'"] = Verdict("fails", others[0].point.tolist(), "extra crossing with a neighbouring band")
    else:
        v["H1'"] = Verdict("holds")
    h2 = [_h2(find_critical(grid, b, gtol, rank_tol)) for b in (n, n + 1)]
    v["H2'"] = next((x for x in h2 if x.status != "holds"), Verdict("holds"))
    v["H3'"] = Verdict("holds")
    qs = set()
    worst = np.inf
    for c in crossings:
        cls = c.classification
        if cls is None or cls.kind != "degenerate":
            v["H3'"] = Verdict("fails", c.point.tolist(), "crossing is not degenerate")
            return v
        qs.add(cls.q)
        Hl = fd_hessian(lam, c.point, min(h, 0.02))
        if cls.q == 2:
            m, wit = _crossing_min_norm(pair, c.point, normal_fan(c.normals, grid.dim), 2,
                                        h / 64, lambda eta: Hl @ eta)
            worst = min(worst, m)
            if m < gtol:
                v["H3'"] = Verdict("fails", wit, "quadratic condition vanishes", m)
                return v
        else:
            r, _, _ = _rank(Hl, rank_tol)
            if r != grid.dim - c.tangent_dim:
                v["H3'"] = Verdict("fails", c.point.tolist(), f"Hess lambda has rank {r}")
                return v
    if len(qs) > 1:
        v["H3'"] = Verdict("fails", None, f"mixed orders {sorted(qs)}")
    elif np.isfinite(worst):
        v["H3'"].margin = worst
    return v


# ---- normal form -------------------------------------------------------------------

def extract_normal_form(source, sigma, n=1, neighborhood=None, normals=None, samples=16):
    """Tabulate lambda and g around sigma on normal rays and fit their local structure."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    d = sigma.size
    pair = _pair_fn(source, n)
    if neighborhood is None:
        neighborhood = source.spacing if hasattr(source, "spacing") else 0.1
    fan = normal_fan(normals, d)
    r = neighborhood * np.arange(1, samples + 1) / samples
    eta = (r[None, :, None] * fan[:, None, :]).reshape(-1, d)
    eta = np.vstack([np.zeros((1, d)), eta])
    e = pair(sigma + eta)
    lo, up = e[..., 0], e[..., 1]
    m = 1
    lam = (m * lo + up) / (1 + m)
    g = (up - lo) / (1 + m)
    resid = max(np.max(np.abs(lo - (lam - g))), np.max(np.abs(up - (lam + m * g))))
    step = min(neighborhood / 4, 0.02)
    H = fd_hessian(_lambda_fn(pair), sigma, step)
    cls = classify_crossing(source, sigma, n, normals=normals, r0=neighborhood / 2)
    theta = None
    if cls.kind == "degenerate" and cls.q == 2:
        th = []
        for dvec in fan:
            def G(rr):
                v = pair(sigma + rr * dvec[None])[0]
                return 0.5 * (v[1] - v[0]) / rr ** 2
            a = neighborhood / 8
            th.append(2 * G(a / 2) - G(a))
        theta = np.array(th)
    return NormalForm(sigma, eta, lam, g, 0.5 * (H + H.T), m, cls.q_fit, theta, float(resid))


def landscape_report(grid, bands, grad_tol=None, gap_tol=None, rank_tol=RANK_TOL, oracle=None):
    rep = LandscapeReport(tolerances={"grad_tol": grad_tol, "gap_tol": gap_tol, "rank_tol": rank_tol,
                                      "relative": {"grad": GRAD_TOL, "gap": GAP_TOL}})
    for n in bands:
        crit = find_critical(grid, n, grad_tol, rank_tol, oracle)
        cross = find_crossings(grid, n, gap_tol) if grid.n_retained > n else []
        rep.critical[n] = crit
        rep.crossings[n] = cross
        rep.verdicts[n] = audit_hypotheses(grid, n, crit, cross, grad_tol, gap_tol, rank_tol)
    rep.meta = {k: v for k, v in grid.meta.items() if isinstance(v, (int, float, str))}
    return rep


def audit_table(report):
    """Plain-text table of hypothesis verdicts, one row per band."""
    names = ("H1", "H2", "H3", "H1'", "H2'", "H3'")
    lines = ["band  " + "  ".join(f"{k:<11}" for k in names) + "  |Lambda|  |Sigma|"]
    for n, v in report.verdicts.items():
        cells = "  ".join(f"{v[k].status:<11}" for k in names)
        lines.append(f"{n:<4}  {cells}  {len(report.critical[n]):<8}  {len(report.crossings[n])}")
    return "\n".join(lines)
