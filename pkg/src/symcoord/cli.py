"""Command-line experiment driver.

Usage follows ``symcoord <experiment> [options] --out <path>``; named presets
bundle the reference-run parameters and can be overridden by a TOML config
file and explicit flags, in that order of precedence.

Exit codes: 0 success, 2 configuration error, 3 divergence or domain trouble
made the experiment unfulfillable, 4 internal numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import (
    ConfigurationError,
    DomainError,
    ExperimentError,
    SymcoordError,
)
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment

__all__ = ["PRESETS", "build_config", "main"]


_FIG3_BASE = dict(
    experiment="convergence",
    model="elastic-pendulum",
    coords=("cartesian",),
    params={"l": 1.0, "m": 1.0, "k": 1.0, "g": 0.2},
    t_max=4.0,
)
_FIG4_BASE = dict(
    experiment="energy-map",
    model="elastic-pendulum",
    params={"l": 1.0, "m": 1.0, "k": 1.0, "g": 0.02},
    h=0.2,
    grid=((-1.5, 1.5, 31), (-1.5, 1.5, 31)),
)

PRESETS = {
    "fig1": dict(
        experiment="compensate-demo", model="cooling",
        params={"alpha": 1.0, "y0": 1.0}, h=0.3, t_max=3.0,
    ),
    "fig2": dict(
        experiment="compensate-demo", model="gompertz",
        params={"a": 2.0, "b": 0.5, "y0": 3.0}, h=0.9, t_max=9.0,
    ),
    "fig3": dict(
        _FIG3_BASE,
        methods=("stoermer-verlet", "rowlands-cheap", "rowlands-exact"),
        h_max=0.08, h_min=0.0025, n_h=6,
    ),
    "fig3-desk": dict(
        _FIG3_BASE,
        methods=("stoermer-verlet", "rowlands-cheap"),
        h_max=0.04, h_min=0.005, n_h=4,
    ),
    "fig4": dict(_FIG4_BASE, t_max=50000.0),
    "fig4-full": dict(_FIG4_BASE, t_max=50000.0),
    "fig4-desk": dict(_FIG4_BASE, t_max=500.0),
    "fig6": dict(
        experiment="trajectory", model="harmonic-oscillator",
        coords=("original", "compensated"), methods=("symplectic-euler",),
        h=0.3, n_steps=1000, k=2.0,
    ),
    "fig7": dict(
        experiment="convergence", model="harmonic-oscillator",
        coords=("original", "compensated"), methods=("symplectic-euler",),
        h_max=0.2, h_min=0.0125, n_h=5, t_max=10.0, k=2.0,
    ),
}


def _split_csv(text: str) -> tuple:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_grid(spec) -> tuple:
    """Grid spec 'x:<lo>:<hi>:<n>,y:<lo>:<hi>:<n>' into ((lo,hi,n),(lo,hi,n))."""
    if isinstance(spec, (tuple, list)):
        return tuple(tuple(axis) for axis in spec)
    axes = {}
    for part in _split_csv(spec):
        bits = part.split(":")
        if len(bits) != 4 or bits[0] not in ("x", "y"):
            raise ConfigurationError(f"bad grid axis {part!r}")
        axes[bits[0]] = (float(bits[1]), float(bits[2]), int(bits[3]))
    if set(axes) != {"x", "y"}:
        raise ConfigurationError("grid needs both x and y axes")
    return (axes["x"], axes["y"])


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"--param wants k=v, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = float(value)
    return out


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symcoord",
        description="Coordinate-dependence experiments for symplectic integrators.",
        epilog="Presets: " + ", ".join(sorted(PRESETS)),
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--model")
        p.add_argument("--coords", help="chart selector(s), comma separated")
        p.add_argument("--method", help="integration method(s), comma separated")
        p.add_argument("--h", type=float)
        p.add_argument("--h-max", type=float)
        p.add_argument("--h-min", type=float)
        p.add_argument("--n-h", type=int)
        p.add_argument("--t-max", type=float)
        p.add_argument("--n-steps", type=int)
        p.add_argument("--ic", help="initial condition, comma separated values")
        p.add_argument("--grid", help="x:<lo>:<hi>:<n>,y:<lo>:<hi>:<n>")
        p.add_argument("--param", action="append", metavar="K=V")
        p.add_argument("--integral", help="first-integral label(s), comma separated")
        p.add_argument("--cyclic", help="cyclic coordinate index(es), comma separated")
        p.add_argument("--n-samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", help="worker count or 'auto'")
        p.add_argument("--k", type=float, help="oscillator chart regularization")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--config", help="TOML file mirroring the flags")
        p.add_argument("--out", help="CSV output path")
    return parser


def _overlay(cfg: dict, extra: dict) -> None:
    for key, value in extra.items():
        if value is None:
            continue
        if key == "params":
            cfg["params"] = {**cfg.get("params", {}), **value}
        else:
            cfg[key] = value


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg: dict = {"experiment": args.experiment, "params": {}}

    if args.preset:
        preset = dict(PRESETS[args.preset])
        if preset["experiment"] != args.experiment:
            raise ConfigurationError(
                f"preset {args.preset!r} belongs to the "
                f"{preset['experiment']!r} experiment"
            )
        _overlay(cfg, preset)
        cfg["preset"] = args.preset

    if args.config:
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
        for plural, singular in (("methods", "method"), ("integrals", "integral")):
            if singular in raw:
                raw[plural] = raw.pop(singular)
        for key in ("coords", "methods", "integrals"):
            if isinstance(raw.get(key), str):
                raw[key] = _split_csv(raw[key])
            elif isinstance(raw.get(key), list):
                raw[key] = tuple(raw[key])
        if "grid" in raw:
            raw["grid"] = _parse_grid(raw["grid"])
        if "ic" in raw:
            raw["ic"] = tuple(float(v) for v in raw["ic"])
        if "cyclic" in raw:
            raw["cyclic"] = tuple(int(v) for v in raw["cyclic"])
        raw.pop("experiment", None)
        _overlay(cfg, raw)

    flags = {
        "model": args.model,
        "coords": _split_csv(args.coords) if args.coords else None,
        "methods": _split_csv(args.method) if args.method else None,
        "h": args.h,
        "h_max": args.h_max,
        "h_min": args.h_min,
        "n_h": args.n_h,
        "t_max": args.t_max,
        "n_steps": args.n_steps,
        "ic": tuple(float(v) for v in _split_csv(args.ic)) if args.ic else None,
        "grid": _parse_grid(args.grid) if args.grid else None,
        "params": _parse_params(args.param) if args.param else None,
        "integrals": _split_csv(args.integral) if args.integral else None,
        "cyclic": tuple(int(v) for v in _split_csv(args.cyclic)) if args.cyclic else None,
        "n_samples": args.n_samples,
        "seed": args.seed,
        "k": args.k,
        "out": args.out,
    }
    _overlay(cfg, flags)

    threads = args.threads if args.threads is not None else cfg.get("threads", 1)
    if isinstance(threads, str):
        threads = os.cpu_count() or 1 if threads == "auto" else int(threads)
    cfg["threads"] = max(1, int(threads))

    if not cfg.get("model"):
        raise ConfigurationError("no model selected (use --model or --preset)")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**cfg)


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        run_experiment(build_config(args))
        return 0
    except ConfigurationError as exc:
        print(f"symcoord: configuration error: {exc}", file=sys.stderr)
        return 2
    except (ExperimentError, DomainError) as exc:
        print(f"symcoord: experiment unfulfillable: {exc}", file=sys.stderr)
        return 3
    except SymcoordError as exc:
        print(f"symcoord: numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
