"""Run configuration: parsing, validation, serialization and presets.

The format is TOML restricted to one level of ``[section]`` tables holding
``key = value`` lines.  Every section and key has a default; unknown names
are errors so a typo cannot silently change an experiment.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .grids import SizeGrid, SpaceGrid
from .kernels import (
    CoagKernel,
    FragKernel,
    RateModel,
    constant_coag,
    load_kernel_table,
    power_kernel,
    product_power_coag,
    sum_power_coag,
    zero_kernel,
)

PRESETS = (
    "pure-diffusion",
    "pure-fragmentation-binary",
    "constant-kernel-coagulation",
    "full-power-rate-global",
    "full-power-rate-violating",
)


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem with its line number."""

    def __init__(self, errors: list[str]) -> None:
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class GridsSection:
    dim: int = 1
    extent: float = 2.0 * math.pi
    points: int = 64
    xi_min: float = 0.01
    xi_max: float = 100.0
    sizes: int = 128


@dataclass
class RatesSection:
    mode: str = "power"
    theta_alpha: float = 0.2
    theta_beta: float = 0.5
    c_alpha: float = 1.0
    c_beta: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    table_xi: list[float] = field(default_factory=list)
    table_alpha: list[float] = field(default_factory=list)
    table_beta: list[float] = field(default_factory=list)


@dataclass
class FragKernelSection:
    family: str = "power"
    nu: float = 0.0
    table: str = ""


@dataclass
class CoagKernelSection:
    family: str = "none"
    kappa0: float = 1.0
    exponent: float = 0.0
    c_kappa: float = 1.0
    rho: float = 0.5


@dataclass
class SolverSection:
    dt: float = 1e-3
    t_end: float = 1.0
    safety: float = 0.5
    mode: str = "strang"
    picard_kmax: int = 12
    picard_tol: float = 1e-8
    picard_nodes: int = 33
    picard_horizon: float = 0.05
    positivity_policy: str = "guard"
    output_every: int = 10
    checkpoint_every: int = 0
    max_rejections: int = 20
    blowup_factor: float = 1e12


@dataclass
class AnalysisSection:
    ell: float = 2.0
    p: float = 4.0
    delta: float = 0.5
    norms: list[str] = field(default_factory=list)
    probes: bool = False
    certify: bool = True


@dataclass
class InitialSection:
    size_profile: str = "exponential"
    number: float = 1.0
    scale: float = 1.0
    width: float = 0.5
    space_profile: str = "uniform"
    amplitude: float = 0.5
    mode: int = 1
    bump_width: float = 0.1
    checkpoint: str = ""


SECTIONS: dict[str, type] = {
    "grids": GridsSection,
    "rates": RatesSection,
    "frag_kernel": FragKernelSection,
    "coag_kernel": CoagKernelSection,
    "solver": SolverSection,
    "analysis": AnalysisSection,
    "initial_condition": InitialSection,
}

CHOICES: dict[tuple[str, str], tuple[str, ...]] = {
    ("rates", "mode"): ("power", "constant", "tabulated"),
    ("frag_kernel", "family"): ("power", "zero", "none", "table"),
    ("coag_kernel", "family"): ("none", "constant", "sum_power", "product_power"),
    ("solver", "mode"): ("strang", "picard"),
    ("solver", "positivity_policy"): ("guard", "patankar"),
    ("initial_condition", "size_profile"): ("exponential", "monodisperse", "lognormal", "zero"),
    ("initial_condition", "space_profile"): ("uniform", "cosine", "gaussian", "random"),
}


@dataclass
class RunConfiguration:
    grids: GridsSection = field(default_factory=GridsSection)
    rates: RatesSection = field(default_factory=RatesSection)
    frag_kernel: FragKernelSection = field(default_factory=FragKernelSection)
    coag_kernel: CoagKernelSection = field(default_factory=CoagKernelSection)
    solver: SolverSection = field(default_factory=SolverSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    initial_condition: InitialSection = field(default_factory=InitialSection)
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    # -- model construction -------------------------------------------------

    def space_grid(self) -> SpaceGrid:
        g = self.grids
        return SpaceGrid(g.dim, g.extent, g.points)

    def size_grid(self) -> SizeGrid:
        g = self.grids
        return SizeGrid(g.xi_min, g.xi_max, g.sizes)

    def rate_model(self) -> RateModel:
        r, d = self.rates, self.grids.dim
        if r.mode == "power":
            return RateModel.power(r.theta_alpha, r.theta_beta, d, r.c_alpha, r.c_beta)
        if r.mode == "constant":
            return RateModel.constant(r.alpha, r.beta, d)
        return RateModel.tabulated(r.table_xi, r.table_alpha, r.table_beta, d)

    def frag_kernel_model(self) -> FragKernel | None:
        f = self.frag_kernel
        if f.family == "none":
            return None
        if f.family == "zero":
            return zero_kernel()
        if f.family == "power":
            return power_kernel(f.nu)
        return load_kernel_table(self._resolve(f.table))

    def coag_kernel_model(self) -> CoagKernel | None:
        c = self.coag_kernel
        if c.family == "none":
            return None
        if c.family == "constant":
            return constant_coag(c.kappa0, c.c_kappa, c.rho)
        if c.family == "sum_power":
            return sum_power_coag(c.kappa0, c.exponent, c.c_kappa, c.rho)
        return product_power_coag(c.kappa0, c.exponent, c.c_kappa, c.rho)

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def checkpoint_path(self) -> Path | None:
        ck = self.initial_condition.checkpoint
        return self._resolve(ck) if ck else None

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    @property
    def sha256(self) -> str:
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# parsing


def _key_lines(text: str) -> dict[tuple[str | None, str], int]:
    """Line number of every ``key =`` (and ``[section]`` header) in the text."""
    lines: dict[tuple[str | None, str], int] = {}
    section: str | None = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]", line)
        if m:
            section = m.group(1)
            lines.setdefault((None, section), no)
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
        if m:
            lines.setdefault((section, m.group(1)), no)
    return lines


def _coerce(value: Any, default: Any, hint: str) -> Any:
    """Check ``value`` against the type of the field; ints are accepted for floats."""
    if hint == "bool":
        if isinstance(value, bool):
            return value
        raise TypeError("expected a boolean")
    if hint == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise TypeError("expected an integer")
    if hint == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise TypeError("expected a number")
    if hint == "str":
        if isinstance(value, str):
            return value
        raise TypeError("expected a string")
    if hint == "list[float]":
        if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return [float(v) for v in value]
        raise TypeError("expected a list of numbers")
    if hint == "list[str]":
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return list(value)
        raise TypeError("expected a list of strings")
    raise TypeError(f"unsupported field type {hint}")


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfiguration:
    """Parse and validate configuration text; raises :class:`ConfigError`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    where = _key_lines(text)
    errors: list[str] = []

    def at(section: str | None, key: str) -> str:
        no = where.get((section, key))
        return f"line {no}" if no is not None else "line ?"

    cfg = RunConfiguration(base_dir=Path(base_dir) if base_dir is not None else None)
    for name, body in data.items():
        if name not in SECTIONS:
            errors.append(f"{at(None, name)}: unknown section [{name}]")
            continue
        if not isinstance(body, dict):
            errors.append(f"{at(None, name)}: [{name}] must be a section")
            continue
        section = getattr(cfg, name)
        known = {f.name: f for f in fields(section)}
        for key, value in body.items():
            if key not in known:
                errors.append(f"{at(name, key)}: unknown key '{key}' in [{name}]")
                continue
            hint = str(known[key].type)
            try:
                setattr(section, key, _coerce(value, getattr(section, key), hint))
            except TypeError as exc:
                errors.append(f"{at(name, key)}: {name}.{key}: {exc}, got {value!r}")
    if not errors:
        errors.extend(f"{at(s, k)}: {msg}" for s, k, msg in validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: RunConfiguration) -> list[tuple[str, str, str]]:
    """Constraint violations as ``(section, key, message)``."""
    out: list[tuple[str, str, str]] = []

    def need(cond: bool, section: str, key: str, msg: str) -> None:
        if not cond:
            out.append((section, key, f"{section}.{key} = {getattr(getattr(cfg, section), key)!r}: {msg}"))

    for (section, key), options in CHOICES.items():
        need(getattr(getattr(cfg, section), key) in options, section, key, f"must be one of {', '.join(options)}")
    g = cfg.grids
    need(g.dim in (1, 2), "grids", "dim", "must be 1 or 2")
    need(g.extent > 0, "grids", "extent", "must be positive")
    need(g.points >= 8 and g.points & (g.points - 1) == 0, "grids", "points", "must be a power of two >= 8")
    need(g.xi_min > 0, "grids", "xi_min", "must be positive")
    need(g.xi_max > g.xi_min, "grids", "xi_max", "must exceed xi_min")
    need(g.sizes >= 2, "grids", "sizes", "must be at least 2")
    r = cfg.rates
    if r.mode == "power":
        need(r.theta_alpha > 0, "rates", "theta_alpha", "must be positive")
        need(r.theta_beta > 0, "rates", "theta_beta", "must be positive")
        need(r.c_alpha > 0, "rates", "c_alpha", "must be positive")
        need(r.c_beta > 0, "rates", "c_beta", "must be positive")
    elif r.mode == "constant":
        need(r.alpha >= 0, "rates", "alpha", "must be non-negative")
        need(r.beta >= 0, "rates", "beta", "must be non-negative")
    elif r.mode == "tabulated":
        ok = len(r.table_xi) >= 2 and len(r.table_xi) == len(r.table_alpha) == len(r.table_beta)
        need(ok, "rates", "table_xi", "tables need equal lengths of at least 2")
    f = cfg.frag_kernel
    if f.family == "power":
        need(-1.0 < f.nu <= 0.0, "frag_kernel", "nu", "must lie in (-1, 0]")
    if f.family == "table":
        need(bool(f.table), "frag_kernel", "table", "a table path is required")
    c = cfg.coag_kernel
    need(0.0 < c.rho < 1.0, "coag_kernel", "rho", "must lie in the open interval (0, 1)")
    need(c.kappa0 >= 0, "coag_kernel", "kappa0", "must be non-negative")
    need(c.c_kappa > 0, "coag_kernel", "c_kappa", "must be positive")
    s = cfg.solver
    need(s.dt > 0, "solver", "dt", "must be positive")
    need(s.t_end > 0, "solver", "t_end", "must be positive")
    need(0 < s.safety <= 1, "solver", "safety", "must lie in (0, 1]")
    need(s.picard_kmax >= 1, "solver", "picard_kmax", "must be at least 1")
    need(s.picard_tol > 0, "solver", "picard_tol", "must be positive")
    need(s.picard_nodes >= 8, "solver", "picard_nodes", "must be at least 8")
    need(s.picard_horizon > 0, "solver", "picard_horizon", "must be positive")
    need(s.output_every >= 1, "solver", "output_every", "must be at least 1")
    need(s.checkpoint_every >= 0, "solver", "checkpoint_every", "must be non-negative")
    need(s.max_rejections >= 0, "solver", "max_rejections", "must be non-negative")
    need(s.blowup_factor > 1, "solver", "blowup_factor", "must exceed 1")
    a = cfg.analysis
    need(a.p >= 1, "analysis", "p", "must be >= 1")
    need(a.ell >= 0, "analysis", "ell", "must be non-negative")
    need(0 <= a.delta < 1, "analysis", "delta", "must lie in [0, 1)")
    for key in a.norms:
        parts = key.split("|")
        ok = len(parts) == 3
        if ok:
            try:
                float(parts[0])
                float(parts[2])
                if parts[1] != "xi":
                    float(parts[1])
            except ValueError:
                ok = False
        need(ok, "analysis", "norms", f"norm key {key!r} must look like 'p|ell|s'")
    ic = cfg.initial_condition
    need(ic.number >= 0, "initial_condition", "number", "must be non-negative")
    need(ic.scale > 0, "initial_condition", "scale", "must be positive")
    need(ic.width > 0, "initial_condition", "width", "must be positive")
    need(0 <= ic.amplitude < 1, "initial_condition", "amplitude", "must lie in [0, 1)")
    need(ic.mode >= 1, "initial_condition", "mode", "must be at least 1")
    need(ic.bump_width > 0, "initial_condition", "bump_width", "must be positive")
    return out


# --------------------------------------------------------------------------
# serialization


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize(cfg: RunConfiguration) -> str:
    """Canonical text: every section and key in declaration order."""
    blocks = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines = [f"[{name}]"]
        lines += [f"{f.name} = {_fmt(getattr(section, f.name))}" for f in fields(section)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_config(path: str | Path) -> RunConfiguration:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    return resources.files("fragkin.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_preset(name: str) -> RunConfiguration:
    return parse_config(preset_text(name))


def norm_specs(cfg: RunConfiguration) -> list:
    """Tracked norms: the configured keys, or the default set for ``(p, ell, rho)``."""
    from .diagnostics import NormSpec, default_norms

    if cfg.analysis.norms:
        return [NormSpec.from_key(k) for k in cfg.analysis.norms]
    return default_norms(cfg.analysis.p, cfg.analysis.ell, cfg.coag_kernel.rho)

