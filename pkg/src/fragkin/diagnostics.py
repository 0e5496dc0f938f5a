"""Sampled norms along a run, boundedness verdicts and post-hoc inequality checks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .grids import SizeGrid, SpaceGrid, weighted_seminorm

logger = logging.getLogger(__name__)

BOUNDED_RATE = 0.1
FIT_FRACTION = 2.0 / 3.0


@dataclass(frozen=True)
class NormSpec:
    """One tracked norm: ``L^p`` in space of the size integral weighted by
    ``w_ell * beta^s`` (``ell == 'xi'`` is the mass weight)."""

    p: float
    ell: float | str
    s: float = 0.0

    @property
    def key(self) -> str:
        ell = self.ell if isinstance(self.ell, str) else f"{self.ell:g}"
        return f"{self.p:g}|{ell}|{self.s:g}"

    @classmethod
    def from_key(cls, key: str) -> "NormSpec":
        p, ell, s = key.split("|")
        return cls(float(p), ell if ell == "xi" else float(ell), float(s))


def default_norms(p: float, ell: float, rho: float) -> list[NormSpec]:
    """Mass, number, first moment, and the ``ell`` moment in ``L^1``, ``L^p`` and ``L^p`` with the ``rho`` weight."""
    specs = [NormSpec(1, "xi"), NormSpec(1, 0.0), NormSpec(1, 1.0), NormSpec(1, ell), NormSpec(p, ell), NormSpec(p, ell, rho)]
    seen, out = set(), []
    for s in specs:
        if s.key not in seen:
            seen.add(s.key)
            out.append(s)
    return out


@dataclass
class DiagnosticsSeries:
    """Time series of the tracked quantities; every list has the length of ``times``."""

    space: SpaceGrid
    size: SizeGrid
    specs: list[NormSpec]
    beta_envelope: np.ndarray | None = None
    times: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    number: list[float] = field(default_factory=list)
    norms: dict[str, list[float]] = field(default_factory=dict)
    posmin: list[float] = field(default_factory=list)
    underflow: list[float] = field(default_factory=list)
    overflow: list[float] = field(default_factory=list)
    abort: dict[str, Any] | None = None
    probes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for ns in self.specs:
            self.norms.setdefault(ns.key, [])

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t: float, values: np.ndarray, underflow: float = 0.0, overflow: float = 0.0) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample times must increase: {t} after {self.times[-1]}")
        vals = np.asarray(values, dtype=float)
        hd = self.space.cell_volume
        self.times.append(float(t))
        self.mass.append(float(hd * np.sum(vals @ (self.size.nodes * self.size.weights))))
        self.number.append(float(hd * np.sum(vals @ self.size.weights)))
        for ns in self.specs:
            self.norms[ns.key].append(
                weighted_seminorm(vals, ns.p, ns.ell, ns.s, self.beta_envelope, self.space, self.size)
            )
        self.posmin.append(float(np.min(vals)) if vals.size else 0.0)
        self.underflow.append(float(underflow))
        self.overflow.append(float(overflow))

    def accounted_mass(self) -> np.ndarray:
        return np.asarray(self.mass) + np.asarray(self.underflow) + np.asarray(self.overflow)

    def records(self) -> list[dict[str, Any]]:
        out = []
        for k in range(len(self.times)):
            out.append({
                "t": self.times[k],
                "mass": self.mass[k],
                "number": self.number[k],
                "norms": {key: vals[k] for key, vals in self.norms.items()},
                "posmin": self.posmin[k],
                "underflow": self.underflow[k],
                "overflow": self.overflow[k],
            })
        return out

    def truncated(self, count: int) -> "DiagnosticsSeries":
        """Copy holding the first ``count`` samples."""
        out = DiagnosticsSeries(self.space, self.size, list(self.specs), self.beta_envelope)
        out.times = self.times[:count]
        out.mass = self.mass[:count]
        out.number = self.number[:count]
        out.norms = {k: v[:count] for k, v in self.norms.items()}
        out.posmin = self.posmin[:count]
        out.underflow = self.underflow[:count]
        out.overflow = self.overflow[:count]
        return out


def sample(series: DiagnosticsSeries, state: Any) -> None:
    """Append one entry for a run state (anything with ``t``, ``u`` and the ledgers)."""
    u = state.u.values if hasattr(state.u, "values") else state.u
    series.append(state.t, u, state.underflow, state.overflow)


# --------------------------------------------------------------------------
# boundedness


@dataclass
class NormVerdict:
    key: str
    initial: float
    maximum: float
    ratio: float
    rate: float
    verdict: str

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class GlobalReport:
    verdicts: dict[str, NormVerdict]
    omega: float
    abort: dict[str, Any] | None
    certificate_passed: bool | None
    t_end: float

    @property
    def summary(self) -> str:
        if self.abort is not None:
            outcome = f"blow-up-abort at t={self.abort.get('t')}"
        elif all(v.verdict == "bounded-trend" for v in self.verdicts.values()):
            outcome = "bounded"
        else:
            growing = sorted(k for k, v in self.verdicts.items() if v.verdict != "bounded-trend")
            outcome = "growing (" + ", ".join(growing) + ")"
        if self.certificate_passed is None:
            return outcome
        return f"condition {'PASS' if self.certificate_passed else 'FAIL'} + {outcome}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "omega": self.omega,
            "abort": self.abort,
            "certificate_passed": self.certificate_passed,
            "t_end": self.t_end,
            "summary": self.summary,
        }


def fitted_log_rate(times: Sequence[float], values: Sequence[float], fraction: float = FIT_FRACTION) -> float:
    """Least-squares slope of ``log(value)`` against time over the final ``fraction`` of samples."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(math.floor(len(t) * (1.0 - fraction)))
    t, v = t[start:], v[start:]
    keep = v > 0
    t, v = t[keep], v[keep]
    if t.size < 2 or np.ptp(t) == 0:
        return 0.0
    slope, _ = np.polyfit(t, np.log(v), 1)
    return float(slope)


def moment_growth_rate(series: DiagnosticsSeries, key: str | None = None) -> float:
    """Smallest ``omega >= 0`` with ``||u(t)|| <= exp(omega t) ||u0||`` on the samples
    (first moment ``X^1_1`` by default)."""
    key = key or NormSpec(1, 1.0).key
    vals = np.asarray(series.norms[key], dtype=float)
    t = np.asarray(series.times, dtype=float)
    if vals.size == 0 or vals[0] <= 0:
        return 0.0
    later = (t > t[0]) & (vals > 0)
    if not np.any(later):
        return 0.0
    rates = np.log(vals[later] / vals[0]) / (t[later] - t[0])
    omega = float(max(0.0, np.max(rates)))
    if not math.isfinite(omega):
        raise ValueError("moment growth rate is not finite")
    return omega


def boundedness_report(series: DiagnosticsSeries, certificate: Any = None, rate_tol: float = BOUNDED_RATE,
                       keys: Iterable[str] | None = None) -> GlobalReport:
    """Per-norm verdicts for a completed run: ``blow-up-abort`` if the run was
    aborted, ``growing`` if the fitted exponential rate over the final two
    thirds exceeds ``rate_tol``, otherwise ``bounded-trend``."""
    keys = list(keys) if keys is not None else list(series.norms)
    verdicts = {}
    for key in keys:
        vals = np.asarray(series.norms[key], dtype=float)
        if vals.size == 0:
            continue
        initial = float(vals[0])
        maximum = float(np.max(vals))
        ratio = maximum / initial if initial > 0 else (0.0 if maximum == 0 else math.inf)
        rate = fitted_log_rate(series.times, vals)
        if series.abort is not None:
            verdict = "blow-up-abort"
        elif rate > rate_tol:
            verdict = "growing"
        else:
            verdict = "bounded-trend"
        verdicts[key] = NormVerdict(key, initial, maximum, ratio, rate, verdict)
    passed = None
    if certificate is not None:
        passed = bool(certificate.passed if hasattr(certificate, "passed") else certificate)
    omega = moment_growth_rate(series) if NormSpec(1, 1.0).key in series.norms else 0.0
    t_end = series.times[-1] if series.times else 0.0
    return GlobalReport(verdicts, omega, series.abort, passed, t_end)


# --------------------------------------------------------------------------
# inequality checks on individual fields


@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    passed: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def interpolation_check(u: np.ndarray, space: SpaceGrid, size: SizeGrid, p: float, ell: float | str = 0.0,
                        s: float = 0.0, beta_envelope: np.ndarray | None = None, rtol: float = 1e-10) -> InequalityCheck:
    """``||u||_{X^2} <= ||u||_{X^1}^(1 - p'/2) ||u||_{X^p}^(p'/2)`` for ``p >= 2``,
    all norms taken with the same size weight."""
    if p < 2:
        raise ValueError("interpolation check needs p >= 2")
    theta = (p / (p - 1.0)) / 2.0 if math.isfinite(p) else 0.5
    n1 = weighted_seminorm(u, 1, ell, s, beta_envelope, space, size)
    n2 = weighted_seminorm(u, 2, ell, s, beta_envelope, space, size)
    npp = weighted_seminorm(u, p, ell, s, beta_envelope, space, size)
    rhs = n1 ** (1.0 - theta) * npp ** theta
    return InequalityCheck(n2, rhs, bool(n2 <= rhs * (1.0 + rtol)))


def coagulation_bound_check(u: np.ndarray, coag_op: Any, space: SpaceGrid, size: SizeGrid, p: float, ell: float,
                            rho: float, c_kappa: float, beta_envelope: np.ndarray) -> InequalityCheck:
    """Bilinear estimate for ``C(u, u)`` in ``X^p_ell`` with all Hölder splits at ``2p``:
    ``(c/2)(1+2^ell) * 2 * (|u|_{2p,ell,rho} |u|_{2p} + |u|_{2p,ell} |u|_{2p,0,rho})``."""
    if ell < 1:
        raise ValueError("coagulation bound needs ell >= 1")
    c = np.asarray(coag_op.apply(u), dtype=float)
    lhs = weighted_seminorm(c, p, ell, 0.0, None, space, size)

    def nrm(l: float, s: float) -> float:
        return weighted_seminorm(u, 2 * p, l, s, beta_envelope, space, size)

    inner = nrm(ell, rho) * nrm(0.0, 0.0) + nrm(0.0, 0.0) * nrm(ell, rho) + nrm(ell, 0.0) * nrm(0.0, rho) \
        + nrm(0.0, rho) * nrm(ell, 0.0)
    rhs = 0.5 * c_kappa * (1.0 + 2.0 ** ell) * inner
    return InequalityCheck(lhs, rhs, bool(lhs <= rhs))


def number_growth_bound(series: DiagnosticsSeries, beta_max: float, fragments: float) -> InequalityCheck:
    """Pure fragmentation: ``N(t) <= N(0) exp(beta_max (fragments - 1) t)``."""
    t = np.asarray(series.times)
    n = np.asarray(series.number)
    if n.size == 0 or n[0] == 0:
        return InequalityCheck(0.0, 0.0, True)
    bound = n[0] * np.exp(beta_max * (fragments - 1.0) * (t - t[0]))
    excess = n - bound * (1.0 + 1e-9)
    worst = int(np.argmax(excess))
    return InequalityCheck(float(n[worst]), float(bound[worst]), bool(np.all(excess <= 0)))

