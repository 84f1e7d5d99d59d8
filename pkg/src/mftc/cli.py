"""Command-line front end.

Configuration files are INI-style with the sections ``[scenario]``,
``[geometry]``, ``[cost]``, ``[solver]`` and ``[output]``::

    [scenario]
    name = tc1

    [geometry]
    Nh = 16
    NT = 16

Commands::

    python -m mftc solve CONFIG [--out DIR] [--threads K]
    python -m mftc check CONFIG
    python -m mftc scenarios

``solve`` exits with 0 on convergence, 2 when the iteration budget runs out
(outputs are still written) and 1 on any error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .admm import HISTORY_COLUMNS, AdmmError, Problem, SolverConfig, solve
from .cases import SCENARIOS, Scenario, get_scenario
from .geometry import Kind, build_geometry
from .krylov import KrylovConfig
from .model import CostModel

__all__ = ["ConfigError", "RunConfig", "parse_config", "render_config", "resolve", "run", "main"]

OUTPUT_ENV = "MFTC_OUTPUT_DIR"
DEFAULT_OUTPUT = "mftc-output"
DEFAULT_SNAPSHOTS = (0.0, 0.25, 0.5, 0.75, 1.0)

logger = logging.getLogger("mftc")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSection:
    name: str = ""
    m0_file: str | None = None
    uT_file: str | None = None
    normalize: bool | None = None


@dataclass(frozen=True)
class GeometrySection:
    kind: str | None = None
    Nh: int | None = None
    NT: int | None = None
    T: float | None = None
    obstacles: tuple[tuple[float, float, float, float], ...] | None = None


@dataclass(frozen=True)
class CostSection:
    alpha: float | None = None
    beta: float | None = None
    ell: float | None = None
    q: float | None = None
    nu: float | None = None


@dataclass(frozen=True)
class SolverSection:
    r: float = 1.0
    max_outer_iters: int = 1000
    stop_hjb_res: float = 1e-8
    stop_gap: float = 1e-8
    stop_increment: float = 1e-8
    krylov_rel_tol: float = 1e-8
    krylov_abs_tol: float = 1e-14
    krylov_max_iters: int | None = None
    preconditioner: str = "none"
    threads: int = 0


@dataclass(frozen=True)
class OutputSection:
    directory: str | None = None
    snapshot_times: tuple[float, ...] = DEFAULT_SNAPSHOTS
    record_every: int = 10
    record_time: bool = True


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    cost: CostSection = field(default_factory=CostSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)


_SECTIONS = {
    "scenario": ScenarioSection,
    "geometry": GeometrySection,
    "cost": CostSection,
    "solver": SolverSection,
    "output": OutputSection,
}

_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _parse_obstacles(text):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = chunk.replace(",", " ").split()
        if len(vals) != 4:
            raise ValueError(f"obstacle {chunk!r} needs four numbers x1min x1max x2min x2max")
        out.append(tuple(float(v) for v in vals))
    return tuple(out)


def _convert(section, key, raw, ftype):
    raw = raw.strip()
    where = f"[{section}] {key}"
    try:
        if "tuple[tuple" in ftype:
            return _parse_obstacles(raw)
        if "tuple[float" in ftype:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if ftype.startswith("bool"):
            if raw.lower() not in _BOOL:
                raise ValueError(f"expected a boolean, got {raw!r}")
            return _BOOL[raw.lower()]
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keys are case-sensitive (Nh, NT, uT_file)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    parts = {}
    for section in cp.sections():
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown section [{section}]")
        types = {f.name: str(f.type) for f in fields(cls)}
        values = {}
        for key, raw in cp.items(section):
            if key not in types:
                raise ConfigError(f"[{section}] unknown key {key!r}; allowed: {', '.join(types)}")
            values[key] = _convert(section, key, raw, types[key])
        parts[section] = cls(**values)
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in rect) for rect in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (fields left at ``None`` are omitted)."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    for section in _SECTIONS:
        part = getattr(cfg, section)
        cp.add_section(section)
        for f in fields(part):
            value = getattr(part, f.name)
            if value is None:
                continue
            if isinstance(value, tuple) and not value and f.name == "obstacles":
                cp.set(section, f.name, "")
                continue
            cp.set(section, f.name, _format(value))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _fail(where, msg):
    raise ConfigError(f"{where}: {msg}")


def validate(cfg: RunConfig) -> None:
    """Check every field by building the objects it describes."""
    sc = cfg.scenario
    custom = sc.name == "custom"
    if not sc.name:
        _fail("[scenario] name", "missing required key")
    if not custom and sc.name not in SCENARIOS:
        _fail("[scenario] name", f"unknown scenario {sc.name!r}; choose from "
              f"{', '.join(SCENARIOS)} or custom")
    if custom:
        for key in ("m0_file", "uT_file"):
            if getattr(sc, key) is None:
                _fail(f"[scenario] {key}", "required for a custom scenario")
        for key in ("kind", "Nh"):
            if getattr(cfg.geometry, key) is None:
                _fail(f"[geometry] {key}", "required for a custom scenario")
        if cfg.cost.alpha is None or cfg.cost.ell is None:
            _fail("[cost]", "alpha and ell are required for a custom scenario")
    else:
        for key in ("m0_file", "uT_file"):
            if getattr(sc, key) is not None:
                _fail(f"[scenario] {key}", f"not allowed with the built-in scenario {sc.name!r}")
        base = get_scenario(sc.name)
        if cfg.geometry.kind is not None and Kind(cfg.geometry.kind) is not base.kind:
            _fail("[geometry] kind", f"scenario {sc.name!r} is {base.kind.value}")

    g = cfg.geometry
    if g.kind is not None and g.kind not in ("periodic", "box"):
        _fail("[geometry] kind", f"expected periodic or box, got {g.kind!r}")
    try:
        geometry_for(cfg)
    except ValueError as exc:
        _fail("[geometry]", str(exc))
    if cfg.cost.nu not in (None, 0.0):
        _fail("[cost] nu", "only nu = 0 (no diffusion) is supported")
    try:
        cost_for(cfg)
    except ValueError as exc:
        _fail("[cost]", str(exc))
    try:
        solver_for(cfg)
    except ValueError as exc:
        _fail("[solver]", str(exc))
    if cfg.solver.threads < 0:
        _fail("[solver] threads", "must be >= 0 (0 = automatic)")
    if not cfg.output.snapshot_times:
        _fail("[output] snapshot_times", "at least one time is required")


def _base_scenario(cfg: RunConfig) -> Scenario | None:
    return None if cfg.scenario.name == "custom" else get_scenario(cfg.scenario.name)


def geometry_for(cfg: RunConfig):
    base = _base_scenario(cfg)
    g = cfg.geometry
    kind = g.kind if g.kind is not None else base.kind
    return build_geometry(
        kind,
        g.Nh if g.Nh is not None else base.Nh,
        g.NT if g.NT is not None else (base.NT if base else 32),
        g.T if g.T is not None else (base.T if base else 1.0),
        g.obstacles if g.obstacles is not None else (base.obstacles if base else ()),
    )


def cost_for(cfg: RunConfig) -> CostModel:
    base = _base_scenario(cfg)
    c = cfg.cost
    ref = base.cost if base else CostModel()
    return CostModel(
        alpha=ref.alpha if c.alpha is None else c.alpha,
        beta=ref.beta if c.beta is None else c.beta,
        lam=ref.lam if c.ell is None else c.ell,
        q=ref.q if c.q is None else c.q,
    )


def solver_for(cfg: RunConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(
        r=s.r,
        max_outer_iters=s.max_outer_iters,
        stop_hjb_res=s.stop_hjb_res,
        stop_gap=s.stop_gap,
        stop_increment=s.stop_increment,
        krylov=KrylovConfig(s.krylov_rel_tol, s.krylov_abs_tol, s.krylov_max_iters, s.preconditioner),
        record_every=cfg.output.record_every,
        record_time=cfg.output.record_time,
    )


def _read_matrix(path, geometry, what):
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"[scenario] {what}: cannot read {path}: {exc}") from None
    if a.shape != geometry.spatial_shape:
        raise ConfigError(
            f"[scenario] {what}: {path} has shape {a.shape}, expected {geometry.spatial_shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"[scenario] {what}: {path} contains non-finite values")
    return a


def resolve(cfg: RunConfig, base_dir: Path | None = None) -> tuple[Problem, SolverConfig]:
    """Turn a validated configuration into a problem and a solver configuration."""
    geometry = geometry_for(cfg)
    cost = cost_for(cfg)
    base = _base_scenario(cfg)
    if base is not None:
        sc = replace(base, cost=cost)
        if cfg.scenario.normalize is not None:
            sc = replace(sc, normalize=cfg.scenario.normalize)
        problem = Problem(geometry, cost, sc.sample_m0(geometry), sc.sample_uT(geometry))
    else:
        root = base_dir or Path(".")
        m0 = _read_matrix(root / cfg.scenario.m0_file, geometry, "m0_file")
        uT = _read_matrix(root / cfg.scenario.uT_file, geometry, "uT_file")
        if np.any(m0 < 0):
            raise ConfigError("[scenario] m0_file: the initial density must be nonnegative")
        m0 = m0 * geometry.node_mask
        if cfg.scenario.normalize is not False:
            total = geometry.h**2 * m0.sum()
            if total <= 0:
                raise ConfigError("[scenario] m0_file: the initial density has zero mass")
            m0 = m0 / total
        problem = Problem(geometry, cost, m0, uT * geometry.node_mask)
    return problem, solver_for(cfg)


def snap_times(times, geometry):
    """Map requested times to the nearest time level; returns ``[(t, n, snapped)]``."""
    out = []
    for t in times:
        n = int(np.clip(np.rint(t / geometry.dt), 0, geometry.NT))
        out.append((t, n, abs(n * geometry.dt - t) > 1e-12))
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_outputs(report, out_dir: Path, cfg: RunConfig) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    g = report.problem.geometry
    written = []

    path = out_dir / "history.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for rec in report.history:
            row = [str(rec.iter)] + [_fmt(getattr(rec, c)) for c in HISTORY_COLUMNS[1:]]
            fh.write(",".join(row) + "\n")
    written.append(path)

    m = report.full_density()
    phi = report.state.phi
    X, Y = g.coords
    snaps = snap_times(cfg.output.snapshot_times, g)
    seen = set()
    for _, n, _ in snaps:
        if n in seen:
            continue
        seen.add(n)
        path = out_dir / f"m_t{n * g.dt:.3f}.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write("i,j,x1,x2,m,phi\n")
            for i in range(g.nx):
                for j in range(g.nx):
                    if not g.node_mask[i, j]:
                        continue
                    fh.write(f"{i},{j},{_fmt(X[i, j])},{_fmt(Y[i, j])},"
                             f"{_fmt(m[n, i, j])},{_fmt(phi[n, i, j])}\n")
        written.append(path)

    path = out_dir / "summary.txt"
    last = report.history[-1]
    lines = [
        f"scenario: {cfg.scenario.name}",
        f"geometry: {g.kind.value} Nh={g.Nh} NT={g.NT} T={g.T!r} obstacles={list(g.obstacles)}",
        f"cost: alpha={report.problem.cost.alpha!r} beta={report.problem.cost.beta!r} "
        f"ell={report.problem.cost.lam!r} q={report.problem.cost.q!r}",
        f"r: {solver_for(cfg).r!r}",
        f"status: {'converged' if report.converged else 'not converged'} ({report.reason})",
        f"iterations: {report.iterations}",
        f"hjb_l2: {last.hjb_l2!r}",
        f"hjb_weighted: {last.hjb_weighted!r}",
        f"gap: {last.gap!r}",
        f"mass range: [{last.mass_min!r}, {last.mass_max!r}]",
    ]
    for t, n, snapped in snaps:
        if snapped:
            lines.append(f"snapshot time {t!r} snapped to grid time {n * g.dt:.3f}")
    if cfg.output.record_time:
        lines.append(f"wall time (s): {last.seconds:.3f}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    return written


def run(cfg: RunConfig, out_dir: Path | None = None, threads: int | None = None,
        base_dir: Path | None = None) -> int:
    """Solve and write outputs; returns the process exit status."""
    try:
        problem, solver = resolve(cfg, base_dir)
        if out_dir is None:
            out_dir = Path(cfg.output.directory or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))
        k = cfg.solver.threads if threads is None else threads
        if k > 0:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=k):
                report = solve(problem, solver)
        else:
            report = solve(problem, solver)
        write_outputs(report, out_dir, cfg)
    except (ConfigError, AdmmError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{report.reason} after {report.iterations} iterations; outputs in {out_dir}")
    return 0 if report.converged else 2


def _load(path: str) -> tuple[RunConfig, Path]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text), p.parent


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mftc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run a configuration")
    p_solve.add_argument("config")
    p_solve.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or {DEFAULT_OUTPUT})")
    p_solve.add_argument("--threads", type=int, help="thread limit for numerical kernels (0 = auto)")
    p_check = sub.add_parser("check", help="validate a configuration")
    p_check.add_argument("config")
    sub.add_parser("scenarios", help="list the built-in scenarios")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")

    if args.command == "scenarios":
        for name in SCENARIOS:
            sc = get_scenario(name)
            print(f"{name:14s} {sc.kind.value:9s} {sc.description}")
        return 0
    try:
        cfg, base_dir = _load(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "check":
        print("configuration is valid")
        return 0
    if args.threads is not None and args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else None
    return run(cfg, out, args.threads, base_dir)
