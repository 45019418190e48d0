import subprocess
import sys

import numpy as np
import pytest

from blochlimit import plotting


def _csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


def test_discriminant_panels():
    lam = np.linspace(-6, 60, 400)
    d = 2 * np.cos(np.sqrt(2 * np.abs(lam))) + np.exp(-lam)
    p = plotting.discriminant_panels(lam, d)
    assert len(p) == 4 and p[0]["xlim"] == (-6.0, 60.0)


def test_figures_written(tmp_path):
    x = np.linspace(0, 1, 20)
    plotting.bands_figure(x, [x, x ** 2], tmp_path / "b.png")
    plotting.convergence_figure([0.1, 0.05], [1e-3, 2e-4], tmp_path / "c.png")
    plotting.series_figure(x, {"a": x + 1}, tmp_path / "s.png", logy=True)
    for n in ("b", "c", "s"):
        assert (tmp_path / f"{n}.png").stat().st_size > 0


def test_unknown_kind():
    with pytest.raises(ValueError):
        plotting.plot_script("pie", "a.csv", "a.png")


@pytest.mark.parametrize("kind,header,kw", [
    ("bands", ["n", "xi", "rho"], {"xcol": "xi"}),
    ("convergence", ["eps", "err"], {}),
    ("series", ["t", "mass"], {"xcol": "t", "ycols": ["mass"]}),
])
def test_generated_script_runs(tmp_path, kind, header, kw):
    rows = [[1 + (i % 2), 0.1 * (i + 1), 0.01 * (i + 1)] for i in range(6)]
    _csv(tmp_path / "d.csv", header, [r[-len(header):] for r in rows])
    path = plotting.write_plot_script(tmp_path, "fig", kind, "d.csv", **kw)
    subprocess.run([sys.executable, path], cwd=tmp_path, check=True)
    assert (tmp_path / "fig.png").exists()
