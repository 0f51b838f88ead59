"""Command-line interface: ``klucrl solve | run | plot | sweep-demo``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .harness import OUTPUT_ENV_VAR, ExperimentConfig, default_output_dir, paired_sign_test, run_experiment
from .klopt import max_kl, max_l1
from .plots import emit_plots, sweep_demo

RUN_KEYS = {
    "env": str,
    "algo": str,
    "horizon": int,
    "reps": int,
    "seed": int,
    "delta": float,
    "reward-mode": str,
    "out": str,
    "env-seed": int,
    "workers": int,
}
RUN_DEFAULTS = {
    "env": "riverswim",
    "algo": "klucrl,ucrl2",
    "horizon": 100_000,
    "reps": 20,
    "seed": 0,
    "delta": 0.05,
    "reward-mode": "det",
    "out": None,
    "env-seed": None,
    "workers": 1,
}
REWARD_MODES = {"det": "deterministic", "bern": "bernoulli", "deterministic": "deterministic", "bernoulli": "bernoulli"}


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in RUN_KEYS:
            raise SystemExit(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = RUN_KEYS[key](value)
    return cfg


def _read_vector(path) -> np.ndarray:
    try:
        return np.array(Path(path).read_text().split(), dtype=np.float64)
    except ValueError as exc:
        raise SystemExit(f"{path}: {exc}") from None


def _fmt(v: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in v)


def cmd_solve(args) -> int:
    p, V = _read_vector(args.p), _read_vector(args.V)
    if p.shape != V.shape:
        raise SystemExit(f"p has {p.size} entries but V has {V.size}")
    if args.metric == "kl":
        sol = max_kl(p, V, args.epsilon)
        print(f"q: {_fmt(sol.q)}")
        print(f"nu: {'none' if sol.nu is None else repr(sol.nu)}")
        print(f"r: {sol.r!r}")
        print(f"branch: {sol.branch.value}")
    else:
        q = max_l1(p, V, args.epsilon)
        print(f"q: {_fmt(q)}")
        print("nu: none")
        print("r: none")
        print("branch: l1-vertex")
    return 0


def _run_settings(args) -> dict:
    settings = dict(RUN_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in RUN_KEYS:
        value = getattr(args, key.replace("-", "_"))
        if value is not None:
            settings[key] = value
    return settings


def cmd_run(args) -> int:
    s = _run_settings(args)
    out = Path(s["out"]) if s["out"] else default_output_dir() / s["env"]
    try:
        reward_mode = REWARD_MODES[s["reward-mode"]]
    except KeyError:
        raise SystemExit(f"unknown reward mode {s['reward-mode']!r}") from None
    config = ExperimentConfig(
        env=s["env"],
        algorithms=tuple(a.strip() for a in s["algo"].split(",") if a.strip()),
        horizon=s["horizon"],
        replications=s["reps"],
        seed=s["seed"],
        delta=s["delta"],
        reward_mode=reward_mode,
        env_seed=s["env-seed"],
        out_dir=out,
        workers=s["workers"],
    )
    result = run_experiment(config)
    print(f"env={config.env} optimal_gain={result.optimal_gain:.6f} diameter={result.diameter:.4f}")
    for algo, st in result.summary.items():
        print(f"{algo}: mean final regret {st['mean']:.2f} +/- {st['stderr']:.2f} (n={st['n']})")
    if {"klucrl", "ucrl2"} <= set(config.algorithms):
        wins, n, pval = paired_sign_test(result.final_regrets("klucrl"), result.final_regrets("ucrl2"))
        print(f"sign test klucrl < ucrl2: {wins}/{n} wins, p={pval:.4g}")
    print(f"wrote {out}")
    return 0


def cmd_plot(args) -> int:
    for path in emit_plots(args.input, args.out, bounds=args.bounds):
        print(path)
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out) if args.out else default_output_dir() / "sweep"
    for path in sweep_demo(out, n_points=args.points):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klucrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="maximize V.q over a KL or L1 ball around p")
    p.add_argument("--p", required=True, help="file holding p (whitespace-separated)")
    p.add_argument("--V", required=True, help="file holding V (whitespace-separated)")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--metric", choices=("kl", "l1"), default="kl")
    p.set_defaults(func=cmd_solve)

    r = sub.add_parser(
        "run",
        help="regret experiment",
        description=f"Flags override --config; output defaults to ${OUTPUT_ENV_VAR}/<env> (or results/<env>).",
    )
    r.add_argument("--config", help="key=value file with the same keys as the flags")
    r.add_argument("--env", choices=("riverswim", "sixarms", "sparse"))
    r.add_argument("--algo", help="comma-separated subset of klucrl,ucrl2")
    r.add_argument("--horizon", type=int)
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--delta", type=float)
    r.add_argument("--reward-mode", choices=("det", "bern"))
    r.add_argument("--env-seed", type=int, help="model seed for --env sparse (default: --seed)")
    r.add_argument("--workers", type=int, help="parallel replication processes")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="gnuplot script and data from a regret CSV")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--bounds", action="store_true", help="overlay the high-probability regret bound")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)

    sw = sub.add_parser("sweep-demo", help="maximizers of both neighbourhoods as the radius shrinks")
    sw.add_argument("--out")
    sw.add_argument("--points", type=int, default=200)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
