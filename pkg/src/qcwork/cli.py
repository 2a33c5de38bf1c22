"""Command-line front end.

Every command reads a flat ``key = value`` configuration (optional), applies
flag overrides, and writes deterministic CSV or JSON files into ``--out``.
Each file starts with the resolved configuration and the package version.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classical import cf_classical_closed, cf_classical_mc, gong_jarzynski_check
from .errors import ConfigError, QCWorkError
from .operators import DriveProtocol, auto_dimension, build_hamiltonian, displaced_thermal, evolve
from .semiclassical import DEFAULT_DEGREE, FIG1_SERIES, default_hbar_ladder, fig1_table, hbar_scan_many
from .wigner import PhaseGrid, angular_average, angular_variance, dephase, wigner_transform
from .workstats import (
    DEFINITIONS,
    characteristic,
    default_eta_grid,
    jarzynski_check,
    jarzynski_dimension,
    quasi_distribution,
    spectral_setup,
)

PROTOCOL_FIELDS = tuple(f.name for f in dataclasses.fields(DriveProtocol))
CF_DIM_FLOOR = 80
SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    """Resolved settings of one command run.  Defaults are the reference protocol."""

    m: float = 1.0
    omega: float = 1.0
    u: float = 1.0
    tau_prime: float = 1.0
    tau: float = 2.0
    beta: float = 1.0
    hbar: float = 1.0
    eta_min: float = -4.0
    eta_max: float = 4.0
    eta_count: int = 161
    dim: int | None = None
    steps: int | None = None
    samples: int = 1_000_000
    seed: int = 0
    hbar_count: int = 10
    hbar_ratio: float = 0.8
    degree: int = DEFAULT_DEGREE
    scan_method: str = "fock"
    grid: int = 512
    definition: str = "all"
    out: str = "."
    format: str = "csv"

    def protocol(self) -> DriveProtocol:
        try:
            return DriveProtocol(**{k: getattr(self, k) for k in PROTOCOL_FIELDS})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def etas(self) -> np.ndarray:
        return default_eta_grid(self.eta_min, self.eta_max, self.eta_count)

    def hbars(self) -> np.ndarray:
        return default_hbar_ladder(self.protocol(), self.hbar_count, self.hbar_ratio)

    def definitions(self):
        if self.definition.lower() == "all":
            return DEFINITIONS
        return (self.definition.upper(),)

    def header(self) -> dict:
        """Resolved configuration written into every output file (no paths)."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if f.name != "out"}


_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_OPTIONAL_INT = {"dim", "steps"}
_INT = {"eta_count", "samples", "seed", "hbar_count", "degree", "grid"}
_CHOICES = {"scan_method": ("fock", "gaussian"), "format": ("csv", "json"),
            "definition": ("all",) + DEFINITIONS}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _OPTIONAL_INT:
        if raw.lower() in ("", "auto", "none"):
            return None
        return int(raw)
    if key in _INT:
        return int(raw)
    if key in _CHOICES:
        value = raw.upper() if key == "definition" and raw.lower() != "all" else raw.lower()
        if value not in _CHOICES[key]:
            raise ValueError(f"expected one of {', '.join(_CHOICES[key])}")
        return value
    if key == "out":
        return raw
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises
    ------
    ConfigError
        With the file and line number of the offending entry.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from None
    return values


def resolve_config(config_path=None, overrides=None) -> RunConfig:
    """Defaults, then the configuration file, then flag overrides."""
    values = {}
    if config_path is not None:
        path = Path(config_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        try:
            values[key] = _convert(key, str(raw))
        except ValueError as exc:
            raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    cfg.protocol()
    if cfg.eta_count < 3:
        raise ConfigError("field 'eta_count': need at least 3 points")
    if not cfg.eta_min < cfg.eta_max:
        raise ConfigError("fields 'eta_min', 'eta_max': need eta_min < eta_max")
    if cfg.dim is not None and cfg.dim < 2:
        raise ConfigError("field 'dim': need at least 2")
    if cfg.steps is not None and cfg.steps < 1:
        raise ConfigError("field 'steps': need at least 1")
    if cfg.samples < 1000:
        raise ConfigError("field 'samples': need at least 1000")
    if cfg.seed < 0:
        raise ConfigError("field 'seed': must be nonnegative")
    if cfg.hbar_count < 4:
        raise ConfigError("field 'hbar_count': need at least 4")
    if not 0 < cfg.hbar_ratio < 1:
        raise ConfigError("field 'hbar_ratio': must lie in (0, 1)")
    if not 3 <= cfg.degree <= cfg.hbar_count - 1:
        raise ConfigError("field 'degree': must lie in [3, hbar_count - 1]")
    if cfg.grid < 64:
        raise ConfigError("field 'grid': need at least 64 points per axis")


# ---------------------------------------------------------------- output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    return value


def _header_lines(cfg: RunConfig, command: str):
    lines = [f"# qcwork {__version__} schema {SCHEMA_VERSION} command {command}"]
    lines += [f"# {k} = {_fmt(v) if v is not None else 'auto'}" for k, v in cfg.header().items()]
    return lines


def write_table(cfg: RunConfig, command: str, name: str, columns, rows, summary=None) -> Path:
    """Write one table as ``name.csv`` or ``name.json`` in ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.format == "json":
        path = out / f"{name}.json"
        doc = {"qcwork": __version__, "schema": SCHEMA_VERSION, "command": command,
               "config": _jsonable(cfg.header()), "columns": list(columns),
               "rows": _jsonable([list(r) for r in rows])}
        if summary:
            doc["summary"] = _jsonable(summary)
        path.write_text(json.dumps(doc, indent=1) + "\n")
        return path
    path = out / f"{name}.csv"
    lines = _header_lines(cfg, command)
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    if summary:
        lines += [f"# summary {k} = {_fmt(v)}" for k, v in summary.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_field(cfg: RunConfig, command: str, name: str, wfield) -> Path:
    """Dump a Wigner field: header, then ``x_range``, ``p_range`` and
    ``counts`` lines, then the values row by row (one row per ``x``)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    g = wfield.grid
    if cfg.format == "json":
        path = out / f"{name}.json"
        doc = {"qcwork": __version__, "schema": SCHEMA_VERSION, "command": command,
               "config": _jsonable(cfg.header()), "x_range": [g.x_min, g.x_max],
               "p_range": [g.p_min, g.p_max], "counts": [g.nx, g.np_],
               "values": _jsonable(wfield.values)}
        path.write_text(json.dumps(doc) + "\n")
        return path
    path = out / f"{name}.csv"
    lines = _header_lines(cfg, command)
    lines.append(f"x_range,{_fmt(g.x_min)},{_fmt(g.x_max)}")
    lines.append(f"p_range,{_fmt(g.p_min)},{_fmt(g.p_max)}")
    lines.append(f"counts,{g.nx},{g.np_}")
    lines += [",".join(_fmt(v) for v in row) for row in wfield.values]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path):
    """Read a CSV written by ``write_table``: ``(columns, rows, summary)`` with
    rows as lists of strings."""
    columns, rows, summary = None, [], {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# summary "):
            key, value = line[len("# summary "):].split(" = ", 1)
            summary[key] = value
        elif line.startswith("#"):
            continue
        elif columns is None:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    return columns, rows, summary


def read_field(path):
    """Read a field dump written by ``write_field``: ``(x_range, p_range, values)``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    xr = tuple(float(v) for v in lines[0].split(",")[1:])
    pr = tuple(float(v) for v in lines[1].split(",")[1:])
    nx, np_ = (int(v) for v in lines[2].split(",")[1:])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[3:]])
    if values.shape != (nx, np_):
        raise ValueError(f"field dump has shape {values.shape}, header says {(nx, np_)}")
    return xr, pr, values


# --------------------------------------------------------------- commands


def _dim(cfg, p):
    return cfg.dim if cfg.dim is not None else max(CF_DIM_FLOOR, auto_dimension(p))


def _operators(cfg, p):
    N = _dim(cfg, p)
    rho = displaced_thermal(p, N)
    H0 = build_hamiltonian(p, 0.0, N)
    Ht = build_hamiltonian(p, p.tau, N)
    U = evolve(p, 0.0, p.tau, N, steps=cfg.steps)
    return rho, H0, Ht, U


def cmd_cf(cfg: RunConfig):
    """Quantum characteristic functions of every definition plus the classical one."""
    p = cfg.protocol()
    etas = cfg.etas()
    rho, H0, Ht, U = _operators(cfg, p)
    setup = spectral_setup(rho, H0, Ht, U)
    series = [(d, characteristic(setup, d, etas).values) for d in DEFINITIONS]
    series.append(("CLASSICAL", cf_classical_closed(etas, p).values))
    rows = [(e, v.real, v.imag, d) for d, vals in series for e, v in zip(etas, vals)]
    return [write_table(cfg, "cf", "cf", ("eta", "re", "im", "definition"), rows)]


def cmd_dist(cfg: RunConfig):
    """Work quasi-distributions with a weight summary."""
    p = cfg.protocol()
    rho, H0, Ht, U = _operators(cfg, p)
    setup = spectral_setup(rho, H0, Ht, U)
    paths = []
    for d in cfg.definitions():
        dist = quasi_distribution(rho, H0, Ht, U, d, setup=setup)
        rows = [(w, q, d) for w, q in zip(dist.support, dist.weights)]
        summary = {"weight_sum": dist.total, "min_weight": dist.min_weight,
                   "negativity_count": dist.negativity_count,
                   "imag_residual": dist.imag_residual}
        paths.append(write_table(cfg, "dist", f"dist_{d.lower()}",
                                 ("work", "weight", "definition"), rows, summary))
    return paths


def cmd_fig1(cfg: RunConfig):
    """Both panels of the five-series comparison."""
    p = cfg.protocol()
    table = fig1_table(p, cfg.etas(), hbars=cfg.hbars(), degree=cfg.degree,
                       steps=cfg.steps, method=cfg.scan_method)
    columns = ("eta",) + FIG1_SERIES + ("fit_residual",)
    paths = []
    for name, part in (("fig1_real", table.real()), ("fig1_imag", table.imag())):
        rows = [(e,) + tuple(part[k][j] for k in FIG1_SERIES) + (table.residual[j],)
                for j, e in enumerate(table.eta)]
        paths.append(write_table(cfg, "fig1", name, columns, rows))
    return paths


def cmd_scan_hbar(cfg: RunConfig):
    """Expansion coefficients ``Phi^(k)`` with uncertainties for FCS and MH."""
    p = cfg.protocol()
    defs = [d for d in cfg.definitions() if d != "TPM"]
    if not defs:
        raise ConfigError("field 'definition': the hbar scan covers FCS and MH only")
    scans = hbar_scan_many(cfg.etas(), p, defs, hbars=cfg.hbars(), degree=cfg.degree,
                           dim=cfg.dim, steps=cfg.steps, method=cfg.scan_method)
    rows = []
    for d in defs:
        for r in scans[d]:
            for k in range(r.degree + 1):
                v = r.phi(k)
                rows.append((r.eta, d, k, v.real, v.imag, r.sigma(k), r.residual))
    return [write_table(cfg, "scan-hbar", "scan_hbar",
                        ("eta", "definition", "order", "re", "im", "sigma", "residual"), rows)]


def cmd_jarzynski(cfg: RunConfig):
    """Generalized Jarzynski checks for every definition and the classical one."""
    p = cfg.protocol()
    N = cfg.dim if cfg.dim is not None else jarzynski_dimension(p)
    rho = displaced_thermal(p, N, check_tail=False)
    reports = [jarzynski_check(rho, p, d, dim=N, steps=cfg.steps) for d in DEFINITIONS]
    reports.append(gong_jarzynski_check(p, cfg.samples, cfg.seed))
    rows = []
    for r in reports:
        tol = "3sigma" if r.stderr is not None else "1e-08"
        rows.append((r.definition, r.lhs, r.rhs, r.delta_f, r.discrepancy, tol,
                     r.stderr, r.truncation_tail, r.passed()))
    columns = ("definition", "lhs", "rhs", "delta_f", "discrepancy", "tolerance",
               "stderr", "truncation_tail", "passed")
    summary = {"dim": N, "all_passed": all(r.passed() for r in reports)}
    return [write_table(cfg, "jarzynski", "jarzynski", columns, rows, summary)]


def cmd_classical(cfg: RunConfig):
    """Monte Carlo characteristic function against the closed form."""
    p = cfg.protocol()
    etas = cfg.etas()
    closed = cf_classical_closed(etas, p).values
    mc, err = cf_classical_mc(etas, p, cfg.samples, cfg.seed)
    mc = mc.values
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(err > 0, np.abs(mc - closed) / np.where(err > 0, err, 1), 0.0)
    rows = [(e, a.real, a.imag, s, b.real, b.imag, zz)
            for e, a, s, b, zz in zip(etas, mc, err, closed, z)]
    summary = {"max_sigma_deviation": float(z.max()), "within_3sigma": bool(z.max() <= 3)}
    columns = ("eta", "mc_re", "mc_im", "stderr", "closed_re", "closed_im", "sigma_deviation")
    return [write_table(cfg, "classical", "classical", columns, rows, summary)]


def cmd_measure(cfg: RunConfig):
    """Wigner fields before and after an energy measurement at ``t = 0``."""
    p = cfg.protocol()
    rho, H0, Ht, U = _operators(cfg, p)
    grid = PhaseGrid.for_protocol(p, cfg.grid)
    before = wigner_transform(rho, grid, p)
    rho_d = dephase(rho, H0)
    after = wigner_transform(rho_d, grid, p)
    average = angular_average(before, p)
    setup = spectral_setup(rho_d, H0, Ht, U)
    etas = cfg.etas()
    cfs = [characteristic(setup, d, etas) for d in DEFINITIONS]
    collapse = max(a.max_deviation(b) for i, a in enumerate(cfs) for b in cfs[i + 1:])
    paths = [write_field(cfg, "measure", "wigner_initial", before),
             write_field(cfg, "measure", "wigner_dephased", after),
             write_field(cfg, "measure", "wigner_average", average)]
    rows = [("linf_average_vs_dephased", average.linf(after)),
            ("linf_initial_vs_dephased", before.linf(after)),
            ("angular_variance_dephased", angular_variance(after, p)),
            ("cf_collapse_max_deviation", collapse),
            ("integral_initial", before.integral()),
            ("integral_average", average.integral())]
    paths.append(write_table(cfg, "measure", "measure", ("quantity", "value"), rows))
    return paths


COMMANDS = {
    "cf": cmd_cf,
    "dist": cmd_dist,
    "fig1": cmd_fig1,
    "scan-hbar": cmd_scan_hbar,
    "jarzynski": cmd_jarzynski,
    "classical": cmd_classical,
    "measure": cmd_measure,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int)
    common.add_argument("--eta-min", type=float)
    common.add_argument("--eta-max", type=float)
    common.add_argument("--eta-count", type=int)
    common.add_argument("--dim", help="Fock dimension or 'auto'")
    common.add_argument("--steps", help="propagator slices or 'auto' (closed form)")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--hbar-count", type=int, help="points in the hbar ladder")
    common.add_argument("--hbar-ratio", type=float, help="ratio of the geometric hbar ladder")
    common.add_argument("--degree", type=int, help="degree of the hbar polynomial fit")
    common.add_argument("--scan-method", choices=("fock", "gaussian"))
    common.add_argument("--grid", type=int, help="phase-space points per axis")
    common.add_argument("--definition", help="TPM, FCS, MH or all")
    for name in PROTOCOL_FIELDS:
        common.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name)

    parser = argparse.ArgumentParser(
        prog="qcwork", description="Work statistics of a dragged harmonic oscillator.")
    parser.add_argument("--version", action="version", version=f"qcwork {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=func.__doc__.splitlines()[0])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k in _KEYS}
    try:
        cfg = resolve_config(args.config, overrides)
        paths = COMMANDS[args.command](cfg)
    except QCWorkError as exc:
        print(f"qcwork {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:  # invalid argument combinations reaching the library
        print(f"qcwork {args.command}: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
