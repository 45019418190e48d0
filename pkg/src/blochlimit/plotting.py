"""Figures for CLI reports.

matplotlib is imported only when a figure is drawn, so the numerical modules never
depend on it.  Every figure comes with a small standalone script that redraws it
from the CSV written next to it; the numbers in the CSV are the contract, the
pictures are for people.
"""
import os
import textwrap

import numpy as np

RC = {
    "figure.dpi": 110,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "font.size": 9,
}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update(RC)
    return plt


def discriminant_panels(lam, delta):
    """Four views of one scan: full, large-lam band, stability strip, first roots."""
    lo, hi = float(lam[0]), float(lam[-1])
    inside = np.abs(delta) <= 2
    first = lam[inside][0] if inside.any() else lo
    roots = lam[np.nonzero(np.diff(np.sign(np.abs(delta) - 2)))[0]]
    zoom_hi = roots[min(5, len(roots) - 1)] + 1.0 if len(roots) else hi
    return [
        {"xlim": (lo, hi), "ylim": None, "title": "full range"},
        {"xlim": (lo + 0.5 * (hi - lo), hi), "ylim": (-3, 3), "title": "large lambda"},
        {"xlim": (lo, hi), "ylim": (-3, 3), "title": "stability strip"},
        {"xlim": (first - 1.0, min(zoom_hi, hi)), "ylim": (-3, 3), "title": "first band edges"},
    ]


def discriminant_figure(lam, delta, path, panels=None):
    plt = _pyplot()
    panels = panels or discriminant_panels(lam, delta)
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    for ax, p in zip(axes.ravel(), panels):
        ax.plot(lam, delta, "k-")
        for lev in (-2, 2):
            ax.axhline(lev, color="tab:red", lw=0.8, ls="--")
        ax.set_xlim(*p["xlim"])
        if p["ylim"] is not None:
            ax.set_ylim(*p["ylim"])
        else:
            ax.set_ylim(-4, min(float(np.max(delta)), 40.0))
        ax.set_title(p["title"])
        ax.set_xlabel("lambda")
        ax.set_ylabel("Delta")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def bands_figure(xi, rho, path, labels=None):
    """rho has shape (n_bands, len(xi))."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for i, r in enumerate(rho):
        ax.plot(xi, r, label=labels[i] if labels else f"n={i + 1}")
    ax.set_xlabel("xi")
    ax.set_ylabel("rho_n(xi)")
    ax.legend(fontsize=7)
    fig.savefig(path)
    plt.close(fig)
    return path


def convergence_figure(eps, err, path, ylabel="err"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.loglog(eps, np.maximum(np.abs(err), 1e-300), "o-k")
    ax.set_xlabel("eps")
    ax.set_ylabel(ylabel)
    fig.savefig(path)
    plt.close(fig)
    return path


def series_figure(x, ys, path, xlabel="x", ylabel="", logy=False):
    """ys maps a label to a curve sampled on x."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, y in ys.items():
        (ax.semilogy if logy else ax.plot)(x, y, label=k)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(ys) > 1:
        ax.legend(fontsize=7)
    fig.savefig(path)
    plt.close(fig)
    return path


# ---- generated scripts -------------------------------------------------------------

_HEAD = '''\
"""Redraw {png} from {csv}.  Generated by blochlimit; edit freely."""
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

data = np.genfromtxt("{csv}", delimiter=",", names=True)
'''

_BODY = {
    "discriminant": '''\
lam, delta = data["lambda"], data["delta"]
panels = {panels!r}
fig, axes = plt.subplots(2, 2, figsize=(8, 6))
for ax, p in zip(axes.ravel(), panels):
    ax.plot(lam, delta, "k-")
    ax.axhline(2, color="tab:red", lw=0.8, ls="--")
    ax.axhline(-2, color="tab:red", lw=0.8, ls="--")
    ax.set_xlim(*p["xlim"])
    ax.set_ylim(*(p["ylim"] or (-4, min(delta.max(), 40.0))))
    ax.set_title(p["title"])
    ax.set_xlabel("lambda")
    ax.set_ylabel("Delta")
fig.tight_layout()
fig.savefig("{png}")
''',
    "bands": '''\
fig, ax = plt.subplots(figsize=(5, 4))
for n in np.unique(data["n"]).astype(int):
    sel = data["n"] == n
    ax.plot(data["{xcol}"][sel], data["rho"][sel], label=f"n={{n}}")
ax.set_xlabel("xi")
ax.set_ylabel("rho_n(xi)")
ax.legend(fontsize=7)
fig.savefig("{png}")
''',
    "convergence": '''\
fig, ax = plt.subplots(figsize=(4.5, 3.5))
ax.loglog(data["eps"], np.abs(data["{ycol}"]), "o-k")
ax.set_xlabel("eps")
ax.set_ylabel("{ycol}")
fig.savefig("{png}")
''',
    "series": '''\
fig, ax = plt.subplots(figsize=(5, 3.5))
for name in {ycols!r}:
    ax.{plotfn}(data["{xcol}"], data[name], label=name)
ax.set_xlabel("{xcol}")
if len({ycols!r}) > 1:
    ax.legend(fontsize=7)
fig.savefig("{png}")
''',
}


def plot_script(kind, csv_name, png_name, **kw):
    """Source of a standalone script redrawing a figure from its CSV (paths relative)."""
    if kind not in _BODY:
        raise ValueError(f"unknown figure kind {kind!r}")
    kw.setdefault("xcol", "xi")
    kw.setdefault("ycol", "err")
    kw.setdefault("plotfn", "plot")
    if "panels" in kw:
        kw["panels"] = [{k: (tuple(float(x) for x in v) if isinstance(v, tuple) else v)
                         for k, v in p.items()} for p in kw["panels"]]
    return _HEAD.format(png=png_name, csv=csv_name) + _BODY[kind].format(png=png_name, **kw)


def write_plot_script(directory, stem, kind, csv_name, **kw):
    path = os.path.join(directory, f"plot_{stem}.py")
    with open(path, "w") as fh:
        fh.write(textwrap.dedent(plot_script(kind, csv_name, f"{stem}.png", **kw)))
    return path
