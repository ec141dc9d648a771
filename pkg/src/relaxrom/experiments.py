"""Experiment configurations, presets and runners behind the command line tool."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .comoving import ComovingModel
from .fom import RelaxationSolver, SolverConfig, Trajectory
from .problems import (burgers_flux, combined, gauss_bump, linear_flux, shifted_sine, sine,
                       step)
from .reference import (GridFunction, RiccatiParams, burgers_riemann_profile, cell_centers,
                        error_norms, exact_riccati, fv_relaxation_solve, shock_speed_estimate)
from .rom import ReducedBasisPair, SnapshotSet, integrate_reduced, pod

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "PRESETS",
    "parse_config",
    "run_full",
    "run_pod",
    "run_reduced",
    "run_compare_fv",
]

FLUXES = ("linear", "burgers", "riccati")
INITIAL_CONDITIONS = ("sine", "shifted_sine", "gauss_bump", "step", "combined")
SHOCK_THRESHOLD = 0.05


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved parameters of one experiment.

    ``dt`` defaults to ``eps / 2`` and ``rho`` to ``eps``.  ``ic_param`` is the
    offset of ``shifted_sine`` and the jump height ``a`` of ``step`` and
    ``combined``.  ``flux = riccati`` selects linear transport with source
    ``gamma w^2 + delta w`` in a co-moving basis; there ``dt`` is the RK4 step.
    """

    name: str = "custom"
    flux: str = "burgers"
    flux_a: float = 1.0
    lam: float = 1.0
    eps: float = 1e-3
    rho: float | None = None
    dt: float | None = None
    N: int = 40
    T: float = 1.0
    scheme: str = "semi_implicit"
    r: int = 0
    snapshot_stride: int = 10
    initial_condition: str = "sine"
    ic_param: float | None = None
    fv_cells: int = 320
    fv_order: int = 2
    gamma: float = 0.0
    delta: float = 0.0
    training: tuple = ()
    zero_basis: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.flux not in FLUXES:
            raise ConfigError(f"flux must be one of {FLUXES}, got {self.flux!r}")
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ConfigError(f"initial_condition must be one of {INITIAL_CONDITIONS}, "
                              f"got {self.initial_condition!r}")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.r < 0 or self.r > self.N:
            raise ConfigError(f"r must lie in 0..N={self.N}, got {self.r}")
        if self.fv_cells < 2 or self.fv_order not in (1, 2):
            raise ConfigError("fv_cells must be >= 2 and fv_order 1 or 2")
        for name in self.training:
            if name not in PRESETS:
                raise ConfigError(f"unknown training preset {name!r}")
        if self.flux == "riccati":
            if not self.lam > 0 or (self.dt is not None and not self.dt > 0):
                raise ConfigError("lam and dt must be positive")
        else:
            try:
                self.solver_config()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    def solver_config(self) -> SolverConfig:
        return SolverConfig(lam=self.lam, eps=self.eps, N=self.N, dt=self.dt, rho=self.rho,
                            scheme=self.scheme, snapshot_stride=self.snapshot_stride)

    @property
    def step_size(self) -> float:
        if self.flux == "riccati":
            return self.dt if self.dt is not None else 1e-3
        return self.solver_config().dt

    def initial(self):
        p = self.ic_param
        ic = self.initial_condition
        if ic == "sine":
            return sine()
        if ic == "shifted_sine":
            return shifted_sine(0.5 if p is None else p)
        if ic == "gauss_bump":
            return gauss_bump()
        if ic == "step":
            return step(1.0 if p is None else p)
        return combined(0.2 if p is None else p)

    def flux_object(self):
        if self.flux == "linear":
            return linear_flux(self.flux_a)
        if self.flux == "burgers":
            return burgers_flux()
        raise ConfigError("the riccati model has no flux function")

    def exact(self, t: float, x):
        """Analytic solution at ``t`` where one is available, else ``None``."""
        if self.flux == "linear" and self.flux_a == self.lam:
            return self.initial()(x - self.flux_a * t)
        if self.flux == "riccati":
            return exact_riccati(self.riccati_params(), t, x)
        if (self.flux == "burgers" and self.initial_condition == "step"):
            a = 1.0 if self.ic_param is None else self.ic_param
            if t <= 1.0 / a:
                return burgers_riemann_profile(a, t, x)
        return None

    def riccati_params(self) -> RiccatiParams:
        return RiccatiParams(self.gamma, self.delta, self.lam, self.initial())

    def as_items(self) -> list:
        items = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(val)
            items.append((f.name, "" if val is None else str(val)))
        return items


PRESETS = {
    "linear-relax": dict(flux="linear", flux_a=1.0, lam=1.0, eps=1e-3, N=40, T=1.0,
                         initial_condition="sine", r=2),
    "riccati": dict(flux="riccati", gamma=2.0, delta=1.0, lam=1.0, N=100, T=0.5, r=30,
                    dt=1e-3, snapshot_stride=5, initial_condition="gauss_bump"),
    "burgers-smooth": dict(flux="burgers", lam=2.0, eps=1e-3, N=160, T=1.0,
                           initial_condition="shifted_sine", ic_param=0.5, fv_cells=320,
                           r=80),
    "burgers-strong": dict(flux="burgers", lam=2.0, eps=1e-3, dt=1e-4, N=160, T=0.6,
                           initial_condition="step", ic_param=1.0, fv_cells=320, r=80),
    "generalize": dict(flux="burgers", lam=2.0, eps=1e-3, dt=1e-4, N=160, T=0.3,
                       initial_condition="combined", ic_param=0.2, fv_cells=320, r=80,
                       training=("burgers-smooth", "burgers-strong")),
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_REQUIRED = ("flux", "lam", "N", "T", "initial_condition")


def _coerce(key: str, raw: str):
    kind = _FIELDS[key].type
    raw = raw.strip()
    if key == "training":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if raw == "" or raw.lower() == "none":
        if "None" in kind:
            return None
        raise ConfigError(f"{key} needs a value")
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    values = dict(PRESETS[name], name=name)
    values.update(overrides)
    return ExperimentConfig(**values)


def _line_of(path: Path, section: str, key: str) -> int | None:
    current = None
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and pattern.match(line):
            return lineno
    return None


def parse_config(path=None, preset_name: str | None = None,
                 overrides=()) -> ExperimentConfig:
    """Build a validated configuration.

    Parameters
    ----------
    path : path-like, optional
        Config file of ``[section]`` blocks with flat ``key = value`` lines.
        A section may name a base preset with ``preset = NAME``.
    preset_name : str, optional
        Preset, or section of ``path`` when a file is given.  A file with a
        single section needs no name.
    overrides : iterable of "key=value"
        Applied last.
    """
    values: dict = {}
    origin = "command line"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        sections = parser.sections()
        if preset_name is None:
            if len(sections) != 1:
                raise ConfigError(f"{path}: choose a section with --preset ({', '.join(sections)})")
            preset_name = sections[0]
        if preset_name not in sections:
            raise ConfigError(f"{path}: no section [{preset_name}]")
        section = parser[preset_name]
        base = section.get("preset")
        if base is not None:
            if base not in PRESETS:
                raise ConfigError(f"{path}:{_line_of(path, preset_name, 'preset')}: "
                                  f"unknown preset {base!r}")
            values.update(PRESETS[base])
        values["name"] = preset_name
        for key, raw in section.items():
            if key == "preset":
                continue
            where = f"{path}:{_line_of(path, preset_name, key)}"
            if key not in _FIELDS:
                raise ConfigError(f"{where}: unknown key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        origin = str(path)
    elif preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; choose from {', '.join(PRESETS)}")
        values.update(PRESETS[preset_name], name=preset_name)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"--override: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"{origin}: missing required field(s): {', '.join(missing)}")
    if values.get("flux") not in ("riccati", None) and "eps" not in values:
        raise ConfigError(f"{origin}: missing required field: eps")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- reports and files ----------------------------------------------------


@dataclass
class RunReport:
    config: ExperimentConfig
    norms: dict = field(default_factory=dict)  # label -> {L1, L2, Linf}
    values: dict = field(default_factory=dict)  # label -> scalar
    timings: dict = field(default_factory=dict)  # phase -> seconds
    files: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["[config]"]
        lines += [f"{k} = {v}" for k, v in self.config.as_items()]
        lines.append("")
        lines.append("[errors]")
        for label, n in self.norms.items():
            lines.append(f"{label}: L1={n['L1']:.6e} L2={n['L2']:.6e} Linf={n['Linf']:.6e}")
        lines.append("")
        lines.append("[values]")
        lines += [f"{k} = {v:.10g}" for k, v in self.values.items()]
        lines.append("")
        lines.append("[timings]")
        lines += [f"{k} = {v:.3f} s" for k, v in self.timings.items()]
        lines.append("")
        lines.append("[files]")
        lines += [str(Path(p).name) for p in self.files]
        return "\n".join(lines) + "\n"

    def write(self, out: Path) -> Path:
        path = Path(out) / "report.txt"
        path.write_text(self.to_text())
        return path


def _write_columns(path: Path, columns: dict) -> Path:
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([f"{v:.17g}" for v in row])
    return path


def _time_tag(t: float) -> str:
    return f"{t:.3f}"


class _Timer:
    def __init__(self, report: RunReport, phase: str):
        self.report, self.phase = report, phase

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.phase] = self.report.timings.get(self.phase, 0.0) \
            + time.perf_counter() - self.start


def _output_times(cfg: ExperimentConfig, times) -> list:
    times = [0.0, cfg.T] if not times else [float(t) for t in times]
    for t in times:
        if t < 0 or t > cfg.T + 1e-12:
            raise ConfigError(f"output time {t:g} outside [0, T={cfg.T:g}]")
    return sorted(set(times))


def _stride_for(cfg: ExperimentConfig, times) -> int:
    """Largest recording stride that hits every requested time exactly."""
    dt = cfg.step_size
    steps = [int(round(t / dt)) for t in times if t > 0]
    g = cfg.snapshot_stride
    for s in steps:
        g = math.gcd(g, s)
    return max(g, 1)


# -- full-order runs ------------------------------------------------------


@dataclass
class FullRun:
    cfg: ExperimentConfig
    trajectory: object  # Trajectory or ComovingRun
    model: object  # RelaxationSolver or ComovingModel

    def profile(self, t: float, x) -> np.ndarray:
        if isinstance(self.model, ComovingModel):
            k = int(np.argmin(np.abs(self.trajectory.times - t)))
            return self.model.reconstruct(self.trajectory.coeffs[k], self.trajectory.times[k], x)
        states = self.trajectory.states
        k = int(np.argmin([abs(s.t - t) for s in states]))
        return self.model.reconstruct_u(states[k], x)

    def final_profile(self, x) -> np.ndarray:
        return self.profile(self.cfg.T, x)


def simulate(cfg: ExperimentConfig, times=None) -> FullRun:
    times = _output_times(cfg, times)
    stride = _stride_for(cfg, times)
    if cfg.flux == "riccati":
        p = cfg.riccati_params()
        model = ComovingModel(cfg.N, cfg.lam, p.source)
        u0 = cfg.initial()
        a0 = model.project(u0, u0.breakpoints)
        run = model.integrate(a0, cfg.T, dt=cfg.step_size, stride=stride)
        return FullRun(cfg, run, model)
    solver = RelaxationSolver(cfg.flux_object(), cfg.solver_config())
    traj = solver.integrate(cfg.initial(), cfg.T, stride=stride)
    traj.meta["run_id"] = cfg.name
    return FullRun(cfg, traj, solver)


def _sample_grid(cfg: ExperimentConfig) -> np.ndarray:
    return cell_centers(cfg.fv_cells)


def run_full(cfg: ExperimentConfig, out, times=None) -> RunReport:
    """Full-order run; writes ``solution_full_t*.csv``, ``mass.csv`` and ``report.txt``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg)
    times = _output_times(cfg, times)
    with _Timer(report, "full"):
        run = simulate(cfg, times)
    x = _sample_grid(cfg)
    for t in times:
        u = run.profile(t, x)
        report.files.append(_write_columns(out / f"solution_full_t{_time_tag(t)}.csv",
                                           {"x": x, "u": u}))
        ex = cfg.exact(t, x)
        if ex is not None and t == times[-1]:
            report.norms["full_vs_exact"] = error_norms(GridFunction(u), GridFunction(ex))

    if isinstance(run.model, RelaxationSolver):
        states = run.trajectory.states
        mass = np.array([run.model.total_mass(s) for s in states])
        t_rec = np.array([s.t for s in states])
        ref = mass[0]
        drift = np.abs(mass - ref) / max(abs(ref), 1.0)
        report.values["mass_relative_drift_max"] = float(drift.max())
        if cfg.flux == "burgers" and cfg.initial_condition == "step":
            try:
                frames = [(s.t, GridFunction(run.model.reconstruct_u(s, x)))
                          for s in states if s.t >= 0.1 * cfg.T]
                report.values["shock_speed"] = shock_speed_estimate(frames, SHOCK_THRESHOLD)
            except ValueError:
                pass
    else:
        t_rec = run.trajectory.times
        w = run.model.family.integral()
        mass = w * run.trajectory.coeffs.sum(axis=1)
        drift = np.abs(mass - mass[0]) / max(abs(mass[0]), 1.0)
    report.files.append(_write_columns(out / "mass.csv",
                                       {"t": t_rec, "mass": mass, "relative_drift": drift}))
    report.files.append(report.write(out))
    return report


# -- POD and reduced runs -------------------------------------------------


def _training_configs(cfg: ExperimentConfig) -> list:
    if not cfg.training:
        return [cfg]
    return [preset(name, snapshot_stride=cfg.snapshot_stride) for name in cfg.training]


def _snapshot_matrix(run: FullRun):
    if isinstance(run.model, ComovingModel):
        c = run.trajectory.coeffs.T
        return c, np.zeros_like(c)
    traj: Trajectory = run.trajectory
    return traj.plus_matrix(), traj.minus_matrix()


def _sv_rows(label: str, sv: np.ndarray):
    top = sv[0] if sv.size and sv[0] > 0 else math.inf
    return [(label, k, s, s / top) for k, s in enumerate(sv, start=1)]


def build_basis(cfg: ExperimentConfig, out: Path | None = None, report: RunReport | None = None):
    """Train a POD basis of rank ``cfg.r`` on the configured training runs."""
    if cfg.r < 1:
        raise ConfigError("r must be at least 1 to build a reduced basis")
    report = report if report is not None else RunReport(cfg)
    runs = []
    with _Timer(report, "training"):
        for tcfg in _training_configs(cfg):
            if tcfg.N != cfg.N:
                raise ConfigError(f"training preset {tcfg.name} has N={tcfg.N}, expected {cfg.N}")
            runs.append(simulate(tcfg))
    mats = [_snapshot_matrix(r) for r in runs]
    plus = np.hstack([m[0] for m in mats])
    minus = np.hstack([m[1] for m in mats])
    rows = []
    if len(runs) > 1:
        for run, (p, m) in zip(runs, mats):
            rows += _sv_rows(f"{run.cfg.name}/plus", np.linalg.svd(p, compute_uv=False))
            rows += _sv_rows(f"{run.cfg.name}/minus", np.linalg.svd(m, compute_uv=False))
    if cfg.r > min(plus.shape):
        raise ConfigError(f"rank r={cfg.r} exceeds the snapshot count {plus.shape[1]}")
    with _Timer(report, "pod"):
        basis = pod(SnapshotSet(plus, minus), rank=cfg.r)
    rows += _sv_rows("combined/plus" if len(runs) > 1 else "plus", basis.sv_plus)
    rows += _sv_rows("combined/minus" if len(runs) > 1 else "minus", basis.sv_minus)
    if out is not None:
        path = Path(out) / "singular_values.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["series", "index", "sigma", "sigma_rel"])
            for label, k, s, rel in rows:
                writer.writerow([label, k, f"{s:.17g}", f"{rel:.17g}"])
        report.files.append(path)
        report.files.extend(basis.save(out))
    report.values["snapshots"] = plus.shape[1]
    report.values["sigma_rel_r_plus"] = float(basis.normalized("plus")[cfg.r - 1])
    return basis, runs


def run_pod(cfg: ExperimentConfig, out) -> RunReport:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg)
    build_basis(cfg, out, report)
    report.files.append(report.write(out))
    return report


def _load_or_build(cfg: ExperimentConfig, basis_dir, out: Path, report: RunReport):
    if cfg.zero_basis:
        return ReducedBasisPair.zero(cfg.N, max(cfg.r, 1))
    if basis_dir is None:
        return build_basis(cfg, out, report)[0]
    try:
        basis = ReducedBasisPair.load(basis_dir)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read basis from {basis_dir}: {exc}") from exc
    if basis.N != cfg.N:
        raise ConfigError(f"basis has {basis.N} rows but N={cfg.N}")
    r = cfg.r or basis.ranks[0]
    if r > min(basis.ranks):
        raise ConfigError(f"r={r} exceeds the stored basis rank {min(basis.ranks)}")
    return ReducedBasisPair(basis.V_plus[:, :r], basis.V_minus[:, :r])


def _reduced_profile(cfg: ExperimentConfig, basis: ReducedBasisPair, x, report: RunReport):
    with _Timer(report, "reduced"):
        if cfg.flux == "riccati":
            p = cfg.riccati_params()
            model = ComovingModel(cfg.N, cfg.lam, p.source)
            u0 = cfg.initial()
            a0 = model.project(u0, u0.breakpoints)
            V = basis.V_plus
            run = model.integrate(a0, cfg.T, dt=cfg.step_size, stride=10**9, basis=V)
            return model.reconstruct(run.final, cfg.T, x)
        solver = RelaxationSolver(cfg.flux_object(), cfg.solver_config())
        traj = integrate_reduced(solver, cfg.initial(), basis, cfg.T, stride=10**9)
        return solver.reconstruct_u(traj.final_lifted, x)


def _fv_profile(cfg: ExperimentConfig, report: RunReport):
    if cfg.flux == "riccati":
        return None
    with _Timer(report, "fv"):
        res = fv_relaxation_solve(cfg.initial(), cfg.flux_object(), cfg.lam, cfg.eps,
                                  cfg.fv_cells, cfg.T, order=cfg.fv_order)
    return res.final.values


def _compare(cfg, out, report, u_full, u_red, u_fv, x):
    cols = {"x": x, "u_full": u_full}
    if u_red is not None:
        cols["u_reduced"] = u_red
    if u_fv is not None:
        cols["u_fv"] = u_fv
    ex = cfg.exact(cfg.T, x)
    if ex is not None:
        cols["u_exact"] = ex
    g = {k: GridFunction(v) for k, v in cols.items() if k != "x"}
    for a, b in (("u_full", "u_exact"), ("u_reduced", "u_exact"), ("u_full", "u_fv"),
                 ("u_reduced", "u_fv"), ("u_reduced", "u_full")):
        if a in g and b in g:
            report.norms[f"{a[2:]}_vs_{b[2:]}"] = error_norms(g[a], g[b])
    report.files.append(_write_columns(Path(out) / "compare.csv", cols))


def run_reduced(cfg: ExperimentConfig, out, basis_dir=None) -> RunReport:
    """Reduced run against the full model and the references; writes ``compare.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg)
    basis = _load_or_build(cfg, basis_dir, out, report)
    x = _sample_grid(cfg)
    u_red = _reduced_profile(cfg, basis, x, report)
    if not np.any(u_red):
        report.values["reduced_solution_identically_zero"] = 1.0
    report.files.append(_write_columns(out / "solution_reduced.csv", {"x": x, "u": u_red}))
    with _Timer(report, "full"):
        u_full = simulate(cfg).final_profile(x)
    _compare(cfg, out, report, u_full, u_red, _fv_profile(cfg, report), x)
    report.files.append(report.write(out))
    return report


def run_compare_fv(cfg: ExperimentConfig, out, basis_dir=None) -> RunReport:
    """Full model against the finite-volume reference (and the reduced model with a basis)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg)
    x = _sample_grid(cfg)
    with _Timer(report, "full"):
        u_full = simulate(cfg).final_profile(x)
    u_red = None
    if basis_dir is not None or cfg.zero_basis:
        u_red = _reduced_profile(cfg, _load_or_build(cfg, basis_dir, out, report), x, report)
    u_fv = _fv_profile(cfg, report)
    if u_fv is not None:
        jf = float(np.max(u_full) - np.min(u_full))
        jv = float(np.max(u_fv) - np.min(u_fv))
        report.values["range_full"] = jf
        report.values["range_fv"] = jv
    _compare(cfg, out, report, u_full, u_red, u_fv, x)
    report.files.append(report.write(out))
    return report
