"""Gnuplot scripts and data files for regret curves and solver sweeps."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .harness import read_metadata, read_regret_csv, theorem_bound_curve
from .klopt import max_kl, max_l1

__all__ = ["emit_plots", "regret_curves", "solver_sweep", "sweep_demo"]

SWEEP_P = (0.3, 0.7, 0.0)
SWEEP_V = (1.0, 2.0, 3.0)
SWEEP_HEADER = ("epsilon", "epsilon_l1", "kl_q1", "kl_q2", "kl_q3", "kl_branch", "l1_q1", "l1_q2", "l1_q3")


def regret_curves(rows) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per algorithm: time grid, mean regret and standard error across replications."""
    by_algo: dict[str, dict[int, dict[int, float]]] = {}
    for r in rows:
        by_algo.setdefault(r["algorithm"], {}).setdefault(r["t"], {})[r["replication"]] = r["regret"]
    curves = {}
    for algo, by_t in by_algo.items():
        ts = np.array(sorted(by_t))
        vals = [np.array(list(by_t[t].values())) for t in ts]
        mean = np.array([v.mean() for v in vals])
        se = np.array([v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0 for v in vals])
        curves[algo] = (ts, mean, se)
    return curves


def _write_columns(path: Path, header: str, *cols) -> None:
    np.savetxt(path, np.column_stack(cols), header=header, comments="# ", fmt="%.10g")


def emit_plots(csv_path, out_dir=None, bounds: bool = False) -> list[Path]:
    """Write ``regret_<algo>.dat`` files and a ``regret.gp`` gnuplot script next to them.

    With ``bounds`` the high-probability regret bound is overlaid, using the
    sizes, diameter and delta recorded in ``metadata.txt`` beside the CSV.
    """
    csv_path = Path(csv_path)
    out = Path(out_dir) if out_dir is not None else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    curves = regret_curves(read_regret_csv(csv_path))
    written = []
    plot_cmds = []
    for algo, (ts, mean, se) in curves.items():
        dat = out / f"regret_{algo}.dat"
        _write_columns(dat, "t mean_regret stderr", ts, mean, se)
        written.append(dat)
        plot_cmds.append(f"'{dat.name}' using 1:($2-$3):($2+$3) with filledcurves fs transparent solid 0.2 notitle")
        plot_cmds.append(f"'{dat.name}' using 1:2 with lines lw 2 title '{algo}'")
    if bounds:
        meta = read_metadata(csv_path.parent / "metadata.txt")
        horizon = max(int(ts[-1]) for ts, _, _ in curves.values())
        grid = np.unique(np.geomspace(6, horizon, 200).round())
        curve = theorem_bound_curve(
            int(meta["n_states"]), int(meta["n_actions"]), float(meta["diameter"]), float(meta["delta"]), grid
        )
        dat = out / "bound.dat"
        _write_columns(dat, "T sqrt_bound", grid, curve["high_probability"])
        written.append(dat)
        plot_cmds.append(f"'{dat.name}' using 1:2 with lines dt 2 title 'regret bound (C=24)'")
    script = out / "regret.gp"
    script.write_text(
        "set terminal pngcairo size 900,600\n"
        "set output 'regret.png'\n"
        "set xlabel 'time step'\n"
        "set ylabel 'regret'\n"
        "set key top left\n"
        + ("set logscale y\n" if bounds else "")
        + "plot " + ", \\\n     ".join(plot_cmds) + "\n"
    )
    written.append(script)
    return written


def solver_sweep(p=SWEEP_P, V=SWEEP_V, eps_grid=None) -> list[tuple]:
    """Maximizers of both neighbourhoods as the KL radius shrinks; the L1 radius is ``sqrt(2 eps)``."""
    if eps_grid is None:
        eps_grid = np.geomspace(0.5, 1 / 500, 200)
    rows = []
    for eps in eps_grid:
        sol = max_kl(p, V, eps)
        eps1 = float(np.sqrt(2 * eps))
        q1 = max_l1(p, V, eps1)
        rows.append((float(eps), eps1, *map(float, sol.q), sol.branch.value, *map(float, q1)))
    return rows


def sweep_demo(out_dir, n_points: int = 200) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = solver_sweep(eps_grid=np.geomspace(0.5, 1 / 500, n_points))
    data = out / "sweep.csv"
    with open(data, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    script = out / "sweep.gp"
    script.write_text(
        "set terminal pngcairo size 900,900\n"
        "set output 'sweep.png'\n"
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale x\n"
        "set xrange [*:*] reverse\n"
        "set multiplot layout 2,1\n"
        "set title 'KL neighbourhood'\n"
        "plot 'sweep.csv' using 1:3 with lines, '' using 1:4 with lines, '' using 1:5 with lines\n"
        "set title 'L1 neighbourhood'\n"
        "plot 'sweep.csv' using 1:7 with lines, '' using 1:8 with lines, '' using 1:9 with lines\n"
        "unset multiplot\n"
    )
    return [data, script]
