"""Parameter sweeps across solution methods with deterministic CSV output.

Configuration is a flat key-value text format with dotted keys::

    model.L = 5
    sweep.methods = full,markov
    sweep.gamma = log:1e-3:100:33
    sweep.kappa_pi = lin:0.05:0.95:65

Grids accept a single number, a comma list, or ``lin:a:b:n`` /
``log:a:b:n`` ranges; ``sweep.kappa_pi`` is expressed in units of pi.
Every CLI flag mirrors one key and overrides it.  Output rows are sorted
by (method, gamma, kappa_F) so the CSV bytes are independent of worker
scheduling; per-point runtimes are recorded unless
``output.include_runtime = false``, which zeroes that column for
byte-reproducible comparisons.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace
from multiprocessing import Pool, cpu_count

import numpy as np

from . import __version__
from .diagnostics import fock_space_oracle, regime, transporting_spectrum
from .fulldynamics import SolverConfig, evolve_to_stationary
from .markov import stationary_markov
from .model import ModelParams, kappa_to_mu, params_for_point
from .nonmarkov import (
    conductance_current,
    evolve_nonmarkov,
    linear_response_stationary,
)
from .smallgamma import current_smallgamma_trace

METHODS = ("full", "smallgamma", "nonmarkov", "nonmarkov-algebraic", "markov", "oracle")

CSV_COLUMNS = (
    "method",
    "gamma",
    "kappa_F",
    "mu",
    "delta_mu",
    "current",
    "max_eig_fraction",
    "converged",
    "residual",
    "t_final",
    "runtime_seconds",
)

WORKERS_ENV = "FERMICHAIN_WORKERS"


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    "model.L": "5",
    "model.M": "100",
    "model.J_s": "1.0",
    "model.J_r": "1.0",
    "model.epsilon": "0.4",
    "model.beta": "inf",
    "sweep.methods": "full",
    "sweep.gamma": "0.1",
    "sweep.kappa_pi": "0.5",
    "sweep.delta_mu": "level-spacing",
    "sweep.bias": "symmetric",
    "solver.dt": "auto",
    "solver.t_max": "auto",
    "solver.tol": "1e-5",
    "solver.integrator": "spectral",
    "solver.memory_cutoff": "1e-8",
    "output.path": "sweep.csv",
    "output.include_runtime": "true",
    "workers": "auto",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str) -> dict[str, str]:
    with open(path) as fh:
        return parse_config_text(fh.read())


def parse_grid(spec: str, scale: float = 1.0) -> np.ndarray:
    """Parse a grid spec: number, comma list, or lin:/log: range."""
    spec = spec.strip()
    try:
        if spec.startswith("log:") or spec.startswith("lin:"):
            kind, a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
            if n < 1:
                raise ValueError
            grid = (
                np.geomspace(a, b, n) if kind == "log" else np.linspace(a, b, n)
            )
        elif "," in spec:
            grid = np.array([float(v) for v in spec.split(",") if v.strip()])
        else:
            grid = np.array([float(spec)])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse grid spec {spec!r}") from exc
    if grid.size == 0:
        raise ConfigError(f"empty grid from spec {spec!r}")
    return grid * scale


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


def _parse_optional_float(raw: str, key: str) -> float | None:
    if raw.strip().lower() in ("auto", "none", ""):
        return None
    return _parse_float(raw, key)


def _parse_bool(raw: str, key: str) -> bool:
    v = raw.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


@dataclass(frozen=True)
class SweepConfig:
    """Resolved sweep settings; see module docstring for the file format."""

    L: int = 5
    M: int = 100
    J_s: float = 1.0
    J_r: float = 1.0
    epsilon: float = 0.4
    beta: float = math.inf
    methods: tuple[str, ...] = ("full",)
    gammas: tuple[float, ...] = (0.1,)
    kappas: tuple[float, ...] = (0.5 * math.pi,)
    delta_mu: float | str = "level-spacing"
    bias: str = "symmetric"
    dt: float | None = None
    t_max: float | None = None
    tol: float = 1e-5
    integrator: str = "spectral"
    memory_cutoff: float = 1e-8
    output_path: str = "sweep.csv"
    include_runtime: bool = True
    workers: int = 0  # 0 = auto
    raw: dict[str, str] = field(default_factory=dict, compare=False)


def resolve_config(overrides: dict[str, str] | None = None) -> SweepConfig:
    raw = dict(DEFAULTS)
    if overrides:
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw.update(overrides)

    methods = tuple(m.strip() for m in raw["sweep.methods"].split(",") if m.strip())
    if not methods:
        raise ConfigError("sweep.methods must list at least one method")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")

    dmu_raw = raw["sweep.delta_mu"].strip()
    delta_mu: float | str
    if dmu_raw == "level-spacing":
        delta_mu = dmu_raw
    else:
        delta_mu = _parse_float(dmu_raw, "sweep.delta_mu")

    bias = raw["sweep.bias"].strip()
    if bias not in ("symmetric", "left"):
        raise ConfigError(f"sweep.bias must be 'symmetric' or 'left', got {bias!r}")

    workers_raw = raw["workers"].strip().lower()
    if workers_raw == "auto":
        workers = int(os.environ.get(WORKERS_ENV, "0") or "0")
    else:
        try:
            workers = int(workers_raw)
        except ValueError as exc:
            raise ConfigError(f"workers: expected an integer, got {workers_raw!r}") from exc
    if workers <= 0:
        workers = cpu_count()

    try:
        cfg = SweepConfig(
            L=int(raw["model.L"]),
            M=int(raw["model.M"]),
            J_s=_parse_float(raw["model.J_s"], "model.J_s"),
            J_r=_parse_float(raw["model.J_r"], "model.J_r"),
            epsilon=_parse_float(raw["model.epsilon"], "model.epsilon"),
            beta=_parse_float(raw["model.beta"], "model.beta"),
            methods=methods,
            gammas=tuple(float(g) for g in parse_grid(raw["sweep.gamma"])),
            kappas=tuple(float(k) for k in parse_grid(raw["sweep.kappa_pi"], scale=math.pi)),
            delta_mu=delta_mu,
            bias=bias,
            dt=_parse_optional_float(raw["solver.dt"], "solver.dt"),
            t_max=_parse_optional_float(raw["solver.t_max"], "solver.t_max"),
            tol=_parse_float(raw["solver.tol"], "solver.tol"),
            integrator=raw["solver.integrator"].strip(),
            memory_cutoff=_parse_float(raw["solver.memory_cutoff"], "solver.memory_cutoff"),
            output_path=raw["output.path"].strip(),
            include_runtime=_parse_bool(raw["output.include_runtime"], "output.include_runtime"),
            workers=workers,
            raw=raw,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if cfg.integrator not in ("spectral", "rk4"):
        raise ConfigError(f"solver.integrator must be 'spectral' or 'rk4'")
    return cfg


@dataclass(frozen=True)
class SweepRecord:
    """One (method, gamma, kappa_F) result row."""

    method: str
    gamma: float
    kappa_F: float
    mu: float
    delta_mu: float
    current: float
    max_eig_fraction: float | None
    converged: bool
    residual: float
    t_final: float
    runtime_seconds: float


def _point_params(cfg: SweepConfig, kappa: float, gamma: float) -> ModelParams:
    return params_for_point(
        kappa,
        gamma,
        delta_mu=cfg.delta_mu,
        bias=cfg.bias,
        beta=cfg.beta,
        L=cfg.L,
        M=cfg.M,
        J_s=cfg.J_s,
        J_r=cfg.J_r,
        epsilon=cfg.epsilon,
    )


def _solver_config(cfg: SweepConfig) -> SolverConfig:
    return SolverConfig(
        dt=cfg.dt,
        t_max=cfg.t_max,
        tol=cfg.tol,
        integrator=cfg.integrator,
        memory_cutoff=cfg.memory_cutoff,
    )


def run_point(cfg: SweepConfig, method: str, gamma: float, kappa: float) -> SweepRecord:
    """Run one grid point; failures become converged=False rows."""
    mu, dmu_rule = kappa_to_mu(kappa, cfg.J_r, cfg.M)
    dmu = dmu_rule if cfg.delta_mu == "level-spacing" else float(cfg.delta_mu)
    start = time.perf_counter()
    fraction = None
    try:
        params = _point_params(cfg, kappa, gamma)
        if method == "full":
            res = evolve_to_stationary(params, _solver_config(cfg))
            current, converged, residual, t_final = (
                res.current, res.converged, res.residual, res.t_final,
            )
        elif method == "smallgamma":
            current = current_smallgamma_trace(params)
            converged, residual, t_final = True, 0.0, 0.0
        elif method == "nonmarkov":
            res = evolve_nonmarkov(params, _solver_config(cfg))
            current, converged, residual, t_final = (
                res.current, res.converged, res.residual, res.t_final,
            )
        elif method == "nonmarkov-algebraic":
            lin = linear_response_stationary(params, mu)
            current = conductance_current(lin.rho1, dmu, params)
            _, fraction = transporting_spectrum(lin.rho1)
            converged, residual, t_final = True, lin.residual, 0.0
        elif method == "markov":
            res = stationary_markov(params)
            current, converged, residual, t_final = (
                res.current, res.converged, res.residual, res.t_final,
            )
        elif method == "oracle":
            res = fock_space_oracle(params, _solver_config(cfg))
            current, converged, residual, t_final = (
                res.current, res.converged, res.residual, res.t_final,
            )
        else:
            raise ConfigError(f"unknown method {method!r}")
    except ConfigError:
        raise
    except Exception:
        current, converged, residual, t_final = math.nan, False, math.inf, 0.0
    runtime = time.perf_counter() - start
    return SweepRecord(
        method=method,
        gamma=gamma,
        kappa_F=kappa,
        mu=mu,
        delta_mu=dmu,
        current=current,
        max_eig_fraction=fraction,
        converged=converged,
        residual=residual,
        t_final=t_final,
        runtime_seconds=runtime,
    )


def _worker(task):
    cfg, method, gamma, kappa = task
    return run_point(cfg, method, gamma, kappa)


def _pool_init():
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def run_records(cfg: SweepConfig) -> list[SweepRecord]:
    """Compute all grid points, sorted by (method, gamma, kappa_F)."""
    tasks = [
        (cfg, method, float(g), float(k))
        for method in sorted(cfg.methods)
        for g in sorted(cfg.gammas)
        for k in sorted(cfg.kappas)
    ]
    if cfg.workers > 1 and len(tasks) > 1:
        with Pool(cfg.workers, initializer=_pool_init) as pool:
            records = pool.map(_worker, tasks, chunksize=1)
    else:
        records = [_worker(t) for t in tasks]
    records.sort(key=lambda r: (r.method, r.gamma, r.kappa_F))
    return records


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def format_csv(records: list[SweepRecord], cfg: SweepConfig) -> str:
    lines = [f"# fermichain {__version__}"]
    for key in sorted(cfg.raw):
        lines.append(f"# {key} = {cfg.raw[key]}")
    lines.append(",".join(CSV_COLUMNS))
    for r in records:
        runtime = r.runtime_seconds if cfg.include_runtime else 0.0
        lines.append(
            ",".join(
                (
                    r.method,
                    _fmt(r.gamma),
                    _fmt(r.kappa_F),
                    _fmt(r.mu),
                    _fmt(r.delta_mu),
                    _fmt(r.current),
                    "" if r.max_eig_fraction is None else _fmt(r.max_eig_fraction),
                    "true" if r.converged else "false",
                    _fmt(r.residual),
                    _fmt(r.t_final),
                    f"{runtime:.3f}",
                )
            )
        )
    return "\n".join(lines) + "\n"


def run_sweep(cfg: SweepConfig) -> list[SweepRecord]:
    """Run the grid and write the CSV to ``cfg.output_path``."""
    records = run_records(cfg)
    with open(cfg.output_path, "w") as fh:
        fh.write(format_csv(records, cfg))
    return records


def write_plot_script(cfg: SweepConfig, path: str) -> None:
    """Emit a gnuplot-style script for the sweep CSV (data-only plotting)."""
    lines = [
        "# gnuplot script for a fermichain sweep",
        "set datafile separator ','",
        "set logscale x",
        "set xlabel 'gamma'",
        "set ylabel 'current'",
        f"plot '{cfg.output_path}' using 2:6 with points title 'current'",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_compare(cfg: SweepConfig) -> str:
    """Multi-method comparison report with per-gamma deviation summaries."""
    if len(cfg.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    records = run_records(cfg)
    by_method: dict[str, dict[tuple[float, float], SweepRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, {})[(r.gamma, r.kappa_F)] = r
    reference = cfg.methods[0]
    ref = by_method[reference]

    lines = [f"comparison report (reference method: {reference})"]
    for gamma in sorted(cfg.gammas):
        probe = _point_params(cfg, float(cfg.kappas[0]), float(gamma))
        lines.append(f"gamma={gamma:.6g} regime={regime(probe)}")
        for method in cfg.methods:
            if method == reference:
                continue
            devs = []
            for kappa in sorted(cfg.kappas):
                a = by_method[method][(gamma, kappa)]
                b = ref[(gamma, kappa)]
                if not (a.converged and b.converged) or not math.isfinite(a.current):
                    continue
                scale = max(abs(b.current), 1e-300)
                devs.append(abs(a.current - b.current) / scale)
            if devs:
                lines.append(
                    f"  {method}: max_dev={max(devs):.4g} "
                    f"median_dev={float(np.median(devs)):.4g} n={len(devs)}"
                )
            else:
                lines.append(f"  {method}: no converged points")
    return "\n".join(lines) + "\n"


def read_sweep_csv(path: str) -> list[SweepRecord]:
    """Read back a sweep CSV written by :func:`run_sweep`."""
    records = []
    with open(path) as fh:
        header: list[str] | None = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if tuple(header) != CSV_COLUMNS:
                    raise ConfigError(f"unexpected CSV columns in {path}")
                continue
            parts = line.split(",")
            records.append(
                SweepRecord(
                    method=parts[0],
                    gamma=float(parts[1]),
                    kappa_F=float(parts[2]),
                    mu=float(parts[3]),
                    delta_mu=float(parts[4]),
                    current=float(parts[5]),
                    max_eig_fraction=float(parts[6]) if parts[6] else None,
                    converged=parts[7] == "true",
                    residual=float(parts[8]),
                    t_final=float(parts[9]),
                    runtime_seconds=float(parts[10]),
                )
            )
    return records
