"""Experiment drivers producing CSV artifacts and gnuplot scripts.

Each ``run_*`` function takes an :class:`ExperimentConfig`, computes its
result deterministically (identical config, seed and thread count give
byte-identical output; thread count never changes values, only wall time) and,
when an output path is set, writes a CSV whose comment header carries the full
resolved configuration.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import OdeState, PhaseState, Trajectory, sample_states
from .diagnostics import (
    delta_hpq,
    drift_order,
    elementary_hpq,
    first_integral_condition,
    invariant_drift,
)
from .errors import ConfigurationError, DomainError, ExperimentError
from .integrators import StepperConfig, reference_solve, solve
from .models import ModelCatalogEntry, get_model, harmonic_oscillator_compensated
from .transforms import (
    map_state_forward,
    map_state_inverse,
    transform_hamiltonian,
    transform_ode,
)

__all__ = [
    "ConvergenceReport",
    "EXPERIMENTS",
    "ExperimentConfig",
    "run_compensate_demo",
    "run_convergence",
    "run_delta_probe",
    "run_energy_map",
    "run_experiment",
    "run_invariant_drift",
    "run_trajectory",
]

EXPERIMENTS = ("convergence", "energy-map", "invariant-drift",
               "compensate-demo", "delta-probe", "trajectory")


@dataclass
class ExperimentConfig:
    experiment: str
    model: str = ""
    coords: tuple = ()
    methods: tuple = ()
    params: dict = field(default_factory=dict)
    h: Optional[float] = None
    h_max: Optional[float] = None
    h_min: Optional[float] = None
    n_h: int = 0
    t_max: Optional[float] = None
    n_steps: Optional[int] = None
    ic: Optional[tuple] = None
    grid: Optional[tuple] = None  # ((xlo, xhi, nx), (ylo, yhi, ny))
    integrals: tuple = ()
    cyclic: tuple = ()
    n_samples: int = 20
    seed: int = 0
    threads: int = 1
    k: float = 2.0
    out: Optional[str] = None
    preset: Optional[str] = None

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    def h_values(self) -> list:
        if self.h is not None:
            return [float(self.h)]
        if not (self.h_max and self.h_min and self.n_h >= 2):
            raise ConfigurationError("give --h, or --h-max/--h-min/--n-h")
        if not (self.h_max > self.h_min > 0.0):
            raise ConfigurationError("need h_max > h_min > 0")
        ratio = self.h_min / self.h_max
        return [self.h_max * ratio ** (i / (self.n_h - 1)) for i in range(self.n_h)]

    def steps_for(self, h: float) -> int:
        if self.n_steps is not None:
            return int(self.n_steps)
        if self.t_max is None:
            raise ConfigurationError("give --t-max or --n-steps")
        return max(1, round(self.t_max / h))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_artifact(cfg: ExperimentConfig, header: Sequence[str],
                    rows: Sequence[Sequence], extra_meta: dict,
                    gnuplot: Optional[str] = None) -> None:
    if cfg.out is None:
        return
    path = Path(cfg.out)
    lines = [f"# config = {json.dumps(cfg.resolved(), sort_keys=True)}"]
    for key in sorted(extra_meta):
        lines.append(f"# {key} = {json.dumps(extra_meta[key], sort_keys=True)}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if gnuplot is not None:
        path.with_suffix(".gp").write_text(gnuplot, encoding="utf-8")


def _parallel(tasks: Sequence[Callable], threads: int) -> list:
    """Run tasks over a pre-sized, index-addressed buffer: output order is
    positional and never depends on completion order."""
    results = [None] * len(tasks)
    if threads <= 1 or len(tasks) <= 1:
        for i, task in enumerate(tasks):
            results[i] = task()
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(task): i for i, task in enumerate(tasks)}
        for fut, i in futures.items():
            results[i] = fut.result()
    return results


def _entry_for_chart(cfg: ExperimentConfig, chart: Optional[str],
                     h: Optional[float] = None) -> ModelCatalogEntry:
    if chart == "compensated" and cfg.model == "harmonic-oscillator":
        if h is None:
            raise ConfigurationError("the compensated chart is built per step size")
        return harmonic_oscillator_compensated(h, cfg.k)
    return get_model(cfg.model, chart, **cfg.params)


def _stepper_cfg(chart: Optional[str], h: float) -> StepperConfig:
    # the compensated oscillator chart degenerates at its turning points,
    # where the implicit update still contracts but slowly; give it headroom
    if chart == "compensated":
        return StepperConfig(h=h, implicit_max_iter=500)
    return StepperConfig(h=h)


def _start_state(cfg: ExperimentConfig, entry: ModelCatalogEntry):
    if cfg.ic is None:
        return entry.default_ic
    vals = [float(v) for v in cfg.ic]
    if isinstance(entry.default_ic, OdeState):
        return OdeState(vals)
    d = entry.default_ic.d
    if len(vals) != 2 * d:
        raise ConfigurationError(f"--ic needs {2 * d} values for {entry.name!r}")
    return PhaseState(vals[:d], vals[d:])


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(values))))


def _energy_errors(traj: Trajectory, system) -> tuple:
    if traj.diverged and len(traj) < 2:
        return math.nan, math.nan
    e = traj.energies(system)
    drift = e - e[0]
    return _rms(drift), float(np.max(np.abs(drift)))


def _fit_slope(hs: Sequence[float], errs: Sequence[float]) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@dataclass
class ConvergenceReport:
    rows: list
    slopes: dict  # (method, chart) -> {"phase": s, "energy": s, "energy_max": s}


_GP_LOGLOG = """set logscale xy
set datafile separator ','
set datafile commentschars '#'
set xlabel 'step size h'
set ylabel 'error'
set key left top
plot '{csv}' using 2:3 with linespoints title 'phase error', \\
     '{csv}' using 2:4 with linespoints title 'energy error (rms)'
"""


def run_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Fixed-step order study: errors against the reference for an h sweep.

    Emits one row per (method, chart, h) with the endpoint phase error
    (Euclidean norm of the deviation from the reference state), the RMS of the
    energy drift over stored steps, and its maximum.  Slopes are least-squares
    fits of log error against log h over the non-diverged rows.
    """
    charts = list(cfg.coords) or [None]
    hs = cfg.h_values()
    ref_cache: dict = {}

    def reference_endpoint(chart, h, entry, s0):
        key = (chart, h if chart == "compensated" else None)
        if key not in ref_cache:
            if cfg.t_max is None:
                raise ConfigurationError("convergence needs --t-max")
            from .errors import NumericError

            try:
                ref_cache[key] = reference_solve(entry.system, s0, cfg.t_max)
            except NumericError as exc:
                raise ExperimentError(
                    f"reference trajectory for chart {chart!r} diverged: {exc}"
                )
        return ref_cache[key]

    tasks = []
    labels = []
    multi = len(charts) > 1
    for chart in charts:
        for method in cfg.methods or ("symplectic-euler",):
            for h in hs:
                def task(chart=chart, method=method, h=h):
                    entry = _entry_for_chart(cfg, chart, h)
                    s0 = _start_state(cfg, entry)
                    ref = reference_endpoint(chart, h, entry, s0)
                    traj = solve(method, entry.system, s0, h, cfg.steps_for(h),
                                 cfg=_stepper_cfg(chart, h))
                    if traj.diverged:
                        return (math.nan, math.nan, math.nan, True)
                    err_phase = float(np.linalg.norm(traj.final.z - ref.final.z))
                    err_energy, err_energy_max = _energy_errors(traj, entry.system)
                    return (err_phase, err_energy, err_energy_max, False)

                tasks.append(task)
                label = f"{method}:{chart}" if multi and chart else method
                labels.append((label, method, chart, h))

    # reference solves are cached per chart; warm the cache serially so the
    # parallel tasks never race on it
    for chart in charts:
        for h in hs:
            entry = _entry_for_chart(cfg, chart, h)
            reference_endpoint(chart, h, entry, _start_state(cfg, entry))
    results = _parallel(tasks, cfg.threads)

    rows = []
    series: dict = {}
    for (label, method, chart, h), (ep, ee, em, div) in zip(labels, results):
        rows.append([label, h, ep, ee, em, div])
        series.setdefault((method, chart), []).append((h, ep, ee, em, div))

    slopes = {}
    for key, pts in series.items():
        ok = [(h, ep, ee, em) for (h, ep, ee, em, div) in pts if not div]
        if len(ok) < 4:
            raise ExperimentError(
                f"only {len(ok)} non-diverged step sizes for {key}; need >= 4"
            )
        hs_ok = [r[0] for r in ok]
        slopes[key] = {
            "phase": _fit_slope(hs_ok, [r[1] for r in ok]),
            "energy": _fit_slope(hs_ok, [r[2] for r in ok]),
            "energy_max": _fit_slope(hs_ok, [r[3] for r in ok]),
        }

    meta = {
        "energy_metric": "rms of H(z_j) - H(z_0) over stored steps; "
                         "err_energy_max is the max absolute drift",
        "phase_metric": "euclidean endpoint distance to the reference",
        "slopes": {f"{m}:{c}" if multi and c else m: s
                   for (m, c), s in slopes.items()},
    }
    gp = _GP_LOGLOG.format(csv=Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, ["method", "h", "err_phase", "err_energy",
                          "err_energy_max", "diverged"], rows, meta, gp)
    return ConvergenceReport(rows=rows, slopes=slopes)


_GP_MAP = """set datafile separator ','
set datafile commentschars '#'
set view map
set xlabel 'x(0)'
set ylabel 'y(0)'
splot '{csv}' using 1:2:5 with points pointtype 5 palette title 'log10 eps ratio'
"""


def run_energy_map(cfg: ExperimentConfig):
    """Energy-error comparison of the two pendulum charts over an IC grid.

    Every grid cell starts at rest at (x0, y0); the polar run starts from the
    canonically mapped image of the same physical state.  Cells are integrated
    in parallel and emitted in row-major order.
    """
    if cfg.model != "elastic-pendulum":
        raise ConfigurationError("the energy map is defined for the elastic pendulum")
    if cfg.grid is None:
        raise ConfigurationError("energy-map needs --grid")
    if cfg.h is None or cfg.t_max is None:
        raise ConfigurationError("energy-map needs --h and --t-max")
    cart = get_model(cfg.model, "cartesian", **cfg.params)
    pol = get_model(cfg.model, "polar", **cfg.params)
    (xlo, xhi, nx), (ylo, yhi, ny) = cfg.grid
    if not all(map(math.isfinite, (xlo, xhi, ylo, yhi))):
        raise ConfigurationError("grid bounds must be finite")
    xs = np.linspace(xlo, xhi, int(nx))
    ys = np.linspace(ylo, yhi, int(ny))
    n_steps = cfg.steps_for(cfg.h)

    def cell(x0: float, y0: float):
        s_cart = PhaseState([x0, y0], [0.0, 0.0])
        beyond = bool(pol.divergence_boundary(
            np.array([math.hypot(x0, y0), math.atan2(x0, y0)])))
        traj = solve("symplectic-euler", cart.system, s_cart, cfg.h, n_steps)
        eps_xy, _ = _energy_errors(traj, cart.system)
        div_xy = traj.diverged
        try:
            s_pol = cart.counterpart_ic(s_cart)
            traj_p = solve("symplectic-euler", pol.system, s_pol, cfg.h, n_steps)
            eps_rphi, _ = _energy_errors(traj_p, pol.system)
            div_rphi = traj_p.diverged
        except DomainError:  # cell sits on the polar singularity
            eps_rphi, div_rphi = math.nan, True
        ratio = (math.log10(eps_xy / eps_rphi)
                 if eps_xy > 0.0 and eps_rphi > 0.0 else math.nan)
        return [x0, y0, eps_xy, eps_rphi, ratio, div_xy, div_rphi, beyond]

    tasks = [
        (lambda x0=float(x0), y0=float(y0): cell(x0, y0))
        for x0 in xs for y0 in ys
    ]
    rows = _parallel(tasks, cfg.threads)
    meta = {
        "energy_metric": "rms of H(z_j) - H(z_0) over stored steps",
        "boundary": "beyond_boundary marks r0 >= 2 l + (2 m g / k) cos(phi0)",
    }
    gp = _GP_MAP.format(csv=Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, ["x0", "y0", "eps_xy", "eps_rphi", "log_ratio",
                          "diverged_xy", "diverged_rphi", "beyond_boundary"],
                    rows, meta, gp)
    return rows


def _condition_setup(entry: ModelCatalogEntry, label: str, params: dict):
    """Original-chart system, transform and cyclic index predicting F's drift."""
    if entry.name != "free-mass":
        return None
    m = params.get("m", 1.0)
    if entry.chart == "polar":
        origin = get_model("free-mass", "cartesian", m=m)
        index = {"p_x": 0, "p_y": 1}.get(label)
    else:
        origin = get_model("free-mass", "polar", m=m)
        index = {"L": 1, "p_theta": 1}.get(label)
    if index is None:
        return None
    return origin, origin.to_counterpart, index


_GP_DRIFT = """set datafile separator ','
set datafile commentschars '#'
set xlabel 't'
set ylabel 'F(z_t) - F(z_0)'
plot for [col=2:*] '{csv}' using 1:col with lines title columnheader(col)
"""


def run_invariant_drift(cfg: ExperimentConfig):
    """Drift series of declared first integrals along one simulated run.

    The summary metadata pairs each measured drift with the Richardson order
    of its single-step change and, where the free-mass chart pair defines it,
    the value of the cyclic-coordinate preservation condition at the start
    state, making the prediction/measurement pairing explicit.
    """
    chart = cfg.coords[0] if cfg.coords else None
    entry = _entry_for_chart(cfg, chart, cfg.h)
    if cfg.h is None:
        raise ConfigurationError("invariant-drift needs --h")
    method = (cfg.methods or ("symplectic-euler",))[0]
    s0 = _start_state(cfg, entry)
    labels = list(cfg.integrals) or [fi.label for fi in entry.system.first_integrals]
    integrals = [entry.system.integral(lbl) for lbl in labels]

    traj = solve(method, entry.system, s0, cfg.h, cfg.steps_for(cfg.h))
    reports = [invariant_drift(traj, fi) for fi in integrals]

    summary = {}
    for fi, rep in zip(integrals, reports):
        order = drift_order(method, entry.system, s0, fi, cfg.h)
        cond = None
        setup = _condition_setup(entry, fi.label, cfg.params)
        if setup is not None:
            origin, pt, index = setup
            try:
                q0, p0 = map_state_forward(entry.to_counterpart, s0.q, s0.p)
                cond = first_integral_condition(origin.system, pt,
                                                PhaseState(q0, p0), index)
            except DomainError:
                cond = None
        summary[fi.label] = {
            "max_drift": rep.max_abs,
            "step_order": None if math.isnan(order) else order,
            "condition_at_ic": cond,
        }

    rows = [[traj.times[j]] + [rep.drift[j] for rep in reports]
            for j in range(len(traj))]
    meta = {"summary": summary, "method": method, "diverged": traj.diverged}
    gp = _GP_DRIFT.format(csv=Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, ["t"] + [f"drift_{lbl}" for lbl in labels], rows, meta, gp)
    return reports, summary


_GP_DEMO = """set datafile separator ','
set datafile commentschars '#'
set xlabel 't'
set ylabel 'y'
plot '{csv}' using 1:2 with points title 'euler (original chart)', \\
     '{csv}' using 1:3 with points title 'euler (compensated chart)', \\
     '{csv}' using 1:4 with lines title 'exact'
"""


def run_compensate_demo(cfg: ExperimentConfig):
    """Explicit Euler on a scalar model in its original and compensated charts.

    The compensated run integrates the transformed field and maps each step
    back; its transformed-chart values are reported alongside, in both scaling
    readings of the transform where the model ships an alternative.
    """
    entry = get_model(cfg.model, None, **cfg.params)
    if entry.compensating is None:
        raise ConfigurationError(f"{cfg.model!r} has no compensating transform")
    if cfg.h is None:
        raise ConfigurationError("compensate-demo needs --h")
    s0 = _start_state(cfg, entry)
    n = cfg.steps_for(cfg.h)
    psi = entry.compensating

    traj = solve("explicit-euler", entry.system, s0, cfg.h, n)
    fbar = transform_ode(entry.system.f, psi)
    ybar = psi.forward(s0.y)
    if not psi.in_domain(s0.y):
        raise DomainError(f"start value {s0.y} outside the transform domain")
    bar_sys_rows = [ybar]
    for _ in range(n):
        ybar = ybar + cfg.h * fbar(ybar)
        bar_sys_rows.append(ybar)

    times = traj.times
    exact = np.array([float(entry.system.closed_form(s0.y, t)[0]) for t in times])
    rows = []
    alt = entry.compensating_alt
    header = ["t", "y_numeric_original", "y_numeric_compensated", "y_exact",
              "ybar_numeric", "ybar_exact"]
    if alt is not None:
        header += ["ybar_alt_numeric", "ybar_alt_exact"]
    for j, t in enumerate(times):
        yb = bar_sys_rows[j]
        y_comp = float(psi.inverse(yb)[0])
        row = [t, float(traj.qs[j][0]), y_comp, exact[j],
               float(yb[0]), float(psi.forward([exact[j]])[0])]
        if alt is not None:
            row += [float(alt.forward([y_comp])[0]),
                    float(alt.forward([exact[j]])[0])]
        rows.append(row)

    meta = {"transform": psi.name}
    gp = _GP_DEMO.format(csv=Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, header, rows, meta, gp)
    return rows


def run_delta_probe(cfg: ExperimentConfig):
    """Tabulate the elementary product in both charts at seeded states.

    Reports, per sampled state, the original- and transformed-chart values,
    their chart-change defect and the residual of the identity linking the
    three; optionally the cyclic preservation condition for requested indices.
    States the transform cannot take are skipped and counted.
    """
    chart = cfg.coords[0] if cfg.coords else None
    entry = _entry_for_chart(cfg, chart, cfg.h)
    if entry.to_counterpart is None:
        raise ConfigurationError(f"{cfg.model!r} has no chart companion to probe")
    pt = entry.to_counterpart
    trans = transform_hamiltonian(entry.system, pt)
    states = sample_states(entry.system, cfg.n_samples, cfg.seed)

    header = ([f"q{i}" for i in range(entry.system.d)]
              + [f"p{i}" for i in range(entry.system.d)]
              + ["hpq_orig", "hpq_trans", "delta", "identity_residual"]
              + [f"cond_q{i}" for i in cfg.cyclic])
    rows = []
    skipped = 0
    for s in states:
        try:
            d = delta_hpq(entry.system, pt, s)
            qb, pb = map_state_forward(pt, s.q, s.p)
            a = elementary_hpq(entry.system, s)
            b = elementary_hpq(trans, PhaseState(qb, pb))
        except DomainError:
            skipped += 1
            continue
        row = list(s.q) + list(s.p) + [a, b, d, b - a - d]
        for idx in cfg.cyclic:
            row.append(first_integral_condition(entry.system, pt, s, idx))
        rows.append(row)

    meta = {"skipped_singular": skipped, "transform": pt.name}
    d_cols = 2 * entry.system.d
    gp = (f"set datafile separator ','\nset datafile commentschars '#'\n"
          f"set xlabel 'sample'\nset ylabel 'value'\n"
          f"plot 'OUT' using 0:{d_cols + 3} with points title 'chart defect', \\\n"
          f"     'OUT' using 0:{d_cols + 4} with points title 'identity residual'\n"
          ).replace("OUT", Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, header, rows, meta, gp)
    return rows


def run_trajectory(cfg: ExperimentConfig):
    """Store raw trajectories, one column group per requested chart.

    Charts other than the model's original one also get their states mapped
    back through the chart transform so runs are comparable in one plot.
    """
    charts = list(cfg.coords) or [None]
    if cfg.h is None:
        raise ConfigurationError("trajectory needs --h")
    method = (cfg.methods or ("symplectic-euler",))[0]
    n = cfg.steps_for(cfg.h)

    groups = []
    for chart in charts:
        entry = _entry_for_chart(cfg, chart, cfg.h)
        if not isinstance(entry.default_ic, PhaseState):
            raise ConfigurationError(
                "the trajectory experiment needs a Hamiltonian model"
            )
        s0 = _start_state(cfg, entry)
        traj = solve(method, entry.system, s0, cfg.h, n,
                     cfg=_stepper_cfg(chart, cfg.h))
        groups.append((chart or entry.chart, entry, traj))

    header = ["t"]
    for label, entry, traj in groups:
        d = entry.default_ic.d if isinstance(entry.default_ic, PhaseState) else 1
        header += [f"{label}_q{i}" for i in range(d)]
        header += [f"{label}_p{i}" for i in range(d)]
        header.append(f"{label}_H")
        if label == "compensated":
            header += [f"{label}_qback{i}" for i in range(d)]
            header += [f"{label}_pback{i}" for i in range(d)]

    n_rows = max(len(traj) for _, _, traj in groups)
    times = None
    for _, _, traj in groups:
        if len(traj) == n_rows:
            times = traj.times
    rows = []
    for j in range(n_rows):
        row = [times[j]]
        for label, entry, traj in groups:
            if j >= len(traj):
                width = 2 * entry.default_ic.d + 1
                if label == "compensated":
                    width += 2 * entry.default_ic.d
                row += [math.nan] * width
                continue
            q, p = traj.qs[j], traj.ps[j]
            row += list(q) + list(p) + [entry.system.H(q, p)]
            if label == "compensated":
                qb, pb = map_state_inverse(entry.to_counterpart, q, p)
                row += list(qb) + list(pb)
        rows.append(row)

    meta = {"method": method,
            "diverged": {label: traj.diverged for label, _, traj in groups}}
    gp = ("set datafile separator ','\nset datafile commentschars '#'\n"
          "set xlabel 'q'\nset ylabel 'p'\n"
          "plot 'OUT' using 2:3 with lines title 'phase trajectory'\n"
          ).replace("OUT", Path(cfg.out).name if cfg.out else "out.csv")
    _write_artifact(cfg, header, rows, meta, gp)
    return rows


def run_experiment(cfg: ExperimentConfig):
    runner = {
        "convergence": run_convergence,
        "energy-map": run_energy_map,
        "invariant-drift": run_invariant_drift,
        "compensate-demo": run_compensate_demo,
        "delta-probe": run_delta_probe,
        "trajectory": run_trajectory,
    }.get(cfg.experiment)
    if runner is None:
        raise ConfigurationError(
            f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}"
        )
    return runner(cfg)
