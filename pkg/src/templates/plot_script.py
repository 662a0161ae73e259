"""
Template for the plotting script dropped into every run directory.
The laboratory itself has no graphics dependency; the generated script
imports matplotlib only when a user runs it.
"""

from typing import Iterable

# Template for plot_series.py; {run_tag} and {series_files} are filled per run
PLOT_SCRIPT_TEMPLATE = '''"""
Plots for run {run_tag}.
Generated by the NLS laboratory; edit freely.

Usage:
    python plot_series.py [--save]
"""

import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
SERIES_FILES = {series_files}


def read_series(name):
    lines = (HERE / name).read_text().splitlines()
    body = [line for line in lines if not line.startswith("#")]
    columns = body[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in body[1:] if line], ndmin=2)
    return {{c: data[:, j] for j, c in enumerate(columns)}}


def main():
    panels = []
    if "trajectory.csv" in SERIES_FILES:
        traj = read_series("trajectory.csv")
        panels.append(("mass / energy drift", traj["t"], [("mass", traj["mass_drift"]), ("energy", traj["energy_drift"])], True))
        panels.append(("lambda proxy", traj["t"], [("||Q_x|| / ||u_x||", traj["lambda_proxy"])], False))
    if "modulation.csv" in SERIES_FILES:
        mod = read_series("modulation.csv")
        panels.append(("modulation parameters", mod["s"], [(k, mod[k]) for k in ("lambda", "x0", "xi")], False))
        panels.append(("||eps||_2", mod["s"], [("eps_l2", mod["eps_l2"])], True))
        panels.append(("modulation law residuals", mod["s"], [(k, np.abs(mod[k])) for k in ("r_lambda", "r_gamma", "r_x", "r_xi")], True))
    if "diagnostics.csv" in SERIES_FILES:
        diag = read_series("diagnostics.csv")
        panels.append(("variance / Morawetz", diag["t"], [("variance", diag["variance"]), ("morawetz", diag["morawetz"])], False))

    if not panels:
        print("no series to plot")
        return
    fig, axes = plt.subplots(len(panels), 1, figsize=(8, 2.6 * len(panels)), squeeze=False)
    for ax, (title, x, curves, log_scale) in zip(axes[:, 0], panels):
        for label, y in curves:
            ax.plot(x, y, label=label)
        if log_scale:
            ax.set_yscale("log")
        ax.set_title(title)
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    if "--save" in sys.argv:
        fig.savefig(HERE / "series.png", dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
'''


def render_plot_script(run_tag: str, series_files: Iterable[str]) -> str:
    """Fill the template for one run."""
    return PLOT_SCRIPT_TEMPLATE.format(run_tag=run_tag, series_files=repr(sorted(series_files)))
