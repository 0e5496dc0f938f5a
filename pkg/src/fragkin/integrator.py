"""Time advancement: Strang splitting and the Picard fixed point of the mild formulation.

A Strang step is ``D(dt/2) R(dt) D(dt/2)``.  ``D`` is the exact per-size heat
flow (it leaves every size slice's spatial integral untouched) and ``R``
integrates the pointwise reaction ``B u + C(u, u)`` with Heun's method on
substeps small enough that forward Euler could not produce negatives.  The
ledger rates are integrated with the same stages, so field mass plus ledgers
is conserved to round-off.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.linalg import expm

from .coagulation import CoagOperator, build_coag_operator
from .diagnostics import DiagnosticsSeries, NormSpec, default_norms, sample
from .diffusion import DiffusionPropagator
from .fragmentation import FragOperator, build_frag_operator
from .grids import Field, SizeGrid, SpaceGrid, weighted_seminorm
from .kernels import CoagKernel, FragKernel, RateModel

logger = logging.getLogger(__name__)

NEG_REL = 1e-12


class PositivityStagnation(RuntimeError):
    """The guard policy halved the reaction substep too many times."""


class NumericalFault(RuntimeError):
    """Non-finite values appeared in the state."""


class NoContraction(RuntimeError):
    """Picard iterates did not contract."""


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    safety: float = 0.5
    mode: str = "strang"
    picard_kmax: int = 12
    picard_tol: float = 1e-10
    picard_nodes: int = 17
    positivity_policy: str = "guard"
    output_every: int = 10
    checkpoint_every: int = 0
    max_rejections: int = 20
    blowup_factor: float = 1e12

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.mode not in ("strang", "picard"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.positivity_policy not in ("guard", "patankar"):
            raise ValueError(f"unknown positivity policy {self.positivity_policy!r}")
        if self.output_every < 1:
            raise ValueError("output_every must be at least 1")
        if self.picard_nodes < 8:
            raise ValueError("picard needs at least 8 time nodes")

    @property
    def total_steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))


@dataclass
class Models:
    """Grids plus the physical model; ``frag=None`` switches fragmentation off
    entirely (no loss either), ``coag=None`` switches coagulation off."""

    space: SpaceGrid
    size: SizeGrid
    rates: RateModel
    frag: FragKernel | None = None
    coag: CoagKernel | None = None
    _ops: "Operators | None" = field(default=None, init=False, repr=False, compare=False)

    def operators(self) -> "Operators":
        if self._ops is None:
            frag_op = build_frag_operator(self.frag, self.rates, self.size, self.space) if self.frag is not None else None
            coag_op = build_coag_operator(self.coag, self.size, self.space) if self.coag is not None else None
            self._ops = Operators(self.space, self.size, self.rates.alpha(self.size.nodes), frag_op, coag_op)
        return self._ops


@dataclass
class Operators:
    space: SpaceGrid
    size: SizeGrid
    alpha: np.ndarray
    frag: FragOperator | None
    coag: CoagOperator | None
    _diffusion: dict[float, DiffusionPropagator] = field(default_factory=dict, repr=False)

    def diffusion(self, dt: float) -> DiffusionPropagator:
        prop = self._diffusion.get(dt)
        if prop is None:
            prop = DiffusionPropagator(self.space, self.size, self.alpha, np.zeros(self.size.count), dt)
            if len(self._diffusion) > 8:
                self._diffusion.clear()
            self._diffusion[dt] = prop
        return prop

    def reaction(self, u: np.ndarray) -> tuple[np.ndarray, float, float]:
        """Rate ``B u + C(u, u)`` and the total underflow and overflow mass rates."""
        hd = self.space.cell_volume
        rate = np.zeros_like(u)
        under = over = 0.0
        if self.frag is not None:
            r, und = self.frag.apply_with_underflow(u)
            rate += r
            under = hd * float(np.sum(und))
        if self.coag is not None:
            c, om, _ = self.coag.apply_with_overflow(u)
            rate += c
            over = hd * float(np.sum(om))
        return rate, under, over

    def gain_loss(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Split form ``gain - lossrate * u`` used by the Patankar policy."""
        rate, under, over = self.reaction(u)
        lossrate = np.zeros_like(u)
        if self.frag is not None:
            lossrate += np.broadcast_to(self.frag.beta, u.shape)
        if self.coag is not None:
            lossrate += self.coag.loss_rate(u)
        gain = rate + lossrate * u
        return gain, lossrate, under, over

    def max_loss_rate(self, u: np.ndarray) -> float:
        r = 0.0
        if self.frag is not None:
            r += self.frag.beta_max
        if self.coag is not None:
            r += float(np.max(self.coag.loss_rate(u))) if u.size else 0.0
        return r

    @property
    def has_reaction(self) -> bool:
        return self.frag is not None or self.coag is not None


@dataclass
class RunState:
    t: float
    u: Field
    underflow: float = 0.0
    overflow: float = 0.0
    step_count: int = 0
    rejections: int = 0
    clamped_mass: float = 0.0
    diagnostics: DiagnosticsSeries | None = field(default=None, repr=False)

    def accounted_mass(self) -> float:
        return self.u.mass() + self.underflow + self.overflow

    def copy(self) -> "RunState":
        return RunState(self.t, self.u.copy(), self.underflow, self.overflow, self.step_count, self.rejections,
                        self.clamped_mass, self.diagnostics)


# --------------------------------------------------------------------------
# reaction stage


def _reaction_guard(u: np.ndarray, dt: float, ops: Operators, cfg: SolverConfig) -> tuple[np.ndarray, float, float, int]:
    rate_bound = ops.max_loss_rate(u)
    nsub = max(1, int(math.ceil(dt * rate_bound / cfg.safety)))
    h = dt / nsub
    remaining = dt
    under = over = 0.0
    rejections = 0
    while remaining > 0:
        if h >= remaining * (1.0 - 1e-12):
            h = remaining
        k1, ul1, ol1 = ops.reaction(u)
        u1 = u + h * k1
        k2, ul2, ol2 = ops.reaction(u1)
        new = 0.5 * (u + u1 + h * k2)
        scale = float(np.max(np.abs(u))) if u.size else 0.0
        floor = -NEG_REL * scale
        if np.any(new < floor) or np.any(u1 < floor):
            rejections += 1
            if rejections > cfg.max_rejections:
                raise PositivityStagnation("positivity-limited stagnation")
            h *= 0.5
            continue
        u = new
        under += 0.5 * h * (ul1 + ul2)
        over += 0.5 * h * (ol1 + ol2)
        remaining -= h
        if remaining <= dt * 1e-14:
            break
    return u, under, over, rejections


def _reaction_patankar(u: np.ndarray, dt: float, ops: Operators, cfg: SolverConfig) -> tuple[np.ndarray, float, float, int]:
    """``u_new = (u + dt gain) / (1 + dt lossrate)``: positive for any step, first
    order, and not mass-exact (the ledgers use the start-of-step rates)."""
    gain, lossrate, under, over = ops.gain_loss(u)
    new = (u + dt * gain) / (1.0 + dt * lossrate)
    return new, dt * under, dt * over, 0


def reaction_step(u: np.ndarray, dt: float, ops: Operators, cfg: SolverConfig) -> tuple[np.ndarray, float, float, int]:
    if not ops.has_reaction:
        return u, 0.0, 0.0, 0
    if cfg.positivity_policy == "patankar":
        return _reaction_patankar(u, dt, ops, cfg)
    return _reaction_guard(u, dt, ops, cfg)


def clamp_global(u: np.ndarray, scale: float, xi_w: np.ndarray, cell_volume: float) -> tuple[np.ndarray, float]:
    """Zero entries in ``[-1e-12 * scale, 0)``; returns the field and the mass added.

    The threshold is relative to the whole field, so nearly empty size
    slices (whose own maximum may be tens of orders below the field's) are
    not judged against themselves.  Deeper negatives are left in place and
    show up in the positivity diagnostics.
    """
    tiny = (u < 0.0) & (u >= -NEG_REL * scale)
    if not np.any(tiny):
        return u, 0.0
    added = -cell_volume * float(np.sum(np.where(tiny, u, 0.0) @ xi_w))
    return np.where(tiny, 0.0, u), added


def step_strang(state: RunState, dt: float, ops: Operators, cfg: SolverConfig) -> RunState:
    """One Strang step; returns a new state (time and counters are set by the caller)."""
    half = ops.diffusion(0.5 * dt)
    xi_w = ops.size.nodes * ops.size.weights
    hd = ops.space.cell_volume
    scale = float(np.max(np.abs(state.u.values))) if state.u.values.size else 0.0
    u, c1 = clamp_global(half.apply(state.u.values, clamp=False), scale, xi_w, hd)
    u, under, over, rej = reaction_step(u, dt, ops, cfg)
    u, c2 = clamp_global(u, scale, xi_w, hd)
    u, c3 = clamp_global(half.apply(u, clamp=False), scale, xi_w, hd)
    if not np.all(np.isfinite(u)):
        raise NumericalFault(f"non-finite values after step {state.step_count + 1}")
    return RunState(state.t + dt, Field(u, state.u.space, state.u.size), state.underflow + under,
                    state.overflow + over, state.step_count + 1, state.rejections + rej,
                    state.clamped_mass + c1 + c2 + c3, state.diagnostics)


# --------------------------------------------------------------------------
# driver


def make_series(models: Models, p: float = 2.0, ell: float = 1.0, rho: float = 0.5,
                specs: list[NormSpec] | None = None) -> DiagnosticsSeries:
    specs = specs if specs is not None else default_norms(p, ell, rho)
    return DiagnosticsSeries(models.space, models.size, specs, models.rates.beta_envelope(models.size.nodes))


def initial_state(u0: Field, series: DiagnosticsSeries | None = None) -> RunState:
    state = RunState(0.0, u0.copy(), diagnostics=series)
    if series is not None:
        sample(series, state)
    return state


def run(config: SolverConfig, initial: Field | RunState, models: Models, series: DiagnosticsSeries | None = None,
        checkpoint: Callable[[RunState], None] | None = None, stop_after: int | None = None) -> DiagnosticsSeries:
    """Advance to ``t_end`` sampling every ``output_every`` steps.

    ``initial`` may be a checkpointed :class:`RunState`, in which case the run
    resumes at its step count; time is always ``step_count * dt`` (the last
    step is shortened to land on ``t_end``) so resumed and uninterrupted runs
    take identical steps.  ``stop_after`` halts after that many total steps.
    The final state is attached as ``series.final_state``.
    """
    if isinstance(initial, RunState):
        state = initial
        if series is None:
            series = state.diagnostics or make_series(models)
        state.diagnostics = series
    else:
        series = series if series is not None else make_series(models)
        state = initial_state(initial, series)
    ops = models.operators()
    total = config.total_steps
    ref = _blowup_reference(series, state)
    while state.step_count < total:
        if stop_after is not None and state.step_count >= stop_after:
            break
        k = state.step_count + 1
        t_next = min(k * config.dt, config.t_end) if k == total else k * config.dt
        dt = t_next - state.t if k == total else config.dt
        state = step_strang(state, dt, ops, config)
        state.t = config.t_end if k == total else k * config.dt
        sampled = k % config.output_every == 0 or k == total
        if sampled:
            sample(series, state)
            tripped = _blowup_check(series, ref, config.blowup_factor)
            if tripped is not None:
                series.abort = {"t": state.t, "step": k, "norm": tripped[0], "value": tripped[1]}
                logger.warning("blow-up abort at t=%g: norm %s reached %g", state.t, tripped[0], tripped[1])
                break
        if checkpoint is not None and config.checkpoint_every and k % config.checkpoint_every == 0:
            checkpoint(state)
    series.final_state = state  # type: ignore[attr-defined]
    if checkpoint is not None and config.checkpoint_every:
        checkpoint(state)
    return series


def _blowup_reference(series: DiagnosticsSeries, state: RunState) -> dict[str, float]:
    if series.times:
        return {key: vals[0] for key, vals in series.norms.items()}
    return {}


def _blowup_check(series: DiagnosticsSeries, ref: dict[str, float], factor: float) -> tuple[str, float] | None:
    for key, vals in series.norms.items():
        base = ref.get(key, 0.0)
        if base > 0 and vals[-1] > factor * base:
            return key, vals[-1]
    return None


# --------------------------------------------------------------------------
# Picard iteration of the mild formulation


class LinearPropagator:
    """Flow of ``alpha Laplacian + B`` over a fixed time ``h``.

    Without spatial modulation of the fragmentation rate the flow decouples
    per wavenumber and is applied exactly through matrix exponentials of
    ``-alpha |k|^2 + B``; otherwise it falls back to Strang substeps refined
    until step halving changes the result by less than ``tol``.
    """

    def __init__(self, ops: Operators, h: float, tol: float = 1e-12) -> None:
        self.ops, self.h, self.tol = ops, h, tol
        self.space = ops.space
        m = ops.size.count
        frag = ops.frag
        self.exact = frag is None or np.ndim(frag.beta) == 1
        if self.exact:
            if frag is None:
                bmat = np.zeros((m, m))
            else:
                bmat = frag.gain * (frag.beta * ops.size.weights)[None, :] - np.diag(frag.beta)
            k2 = ops.space.k_squared()
            uniq, inverse = np.unique(k2, return_inverse=True)
            self._inverse = inverse.reshape(k2.shape)
            self._mats = np.stack([expm(h * (bmat - kk * np.diag(ops.alpha))) for kk in uniq])
        else:
            self._nsub = self._calibrate()

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.exact:
            axes = tuple(range(self.space.dim))
            uh = np.fft.rfftn(u, axes=axes)
            mats = self._mats[self._inverse]
            out = np.einsum("...ij,...j->...i", mats, uh)
            return np.fft.irfftn(out, s=self.space.shape, axes=axes)
        return self._substeps(u, self._nsub)

    def _substeps(self, u: np.ndarray, n: int) -> np.ndarray:
        h = self.h / n
        half = self.ops.diffusion(0.5 * h)
        frag = self.ops.frag
        for _ in range(n):
            u = half.apply(u, clamp=False)
            k1 = frag.apply(u)
            u1 = u + h * k1
            u = 0.5 * (u + u1 + h * frag.apply(u1))
            u = half.apply(u, clamp=False)
        return u

    def _calibrate(self) -> int:
        rng = np.random.default_rng(0)
        probe = rng.random(self.space.shape + (self.ops.size.count,))
        n = 2
        coarse = self._substeps(probe, n)
        while n < 4096:
            fine = self._substeps(probe, 2 * n)
            if np.max(np.abs(fine - coarse)) <= self.tol * max(1.0, float(np.max(np.abs(fine)))):
                return 2 * n
            n, coarse = 2 * n, fine
        logger.warning("linear propagator substeps capped at %d", n)
        return n


@dataclass
class PicardReport:
    times: np.ndarray
    distances: list[float]
    ratios: list[float]
    converged: bool
    iterations: int
    solution: np.ndarray = field(repr=False)
    linear: np.ndarray = field(repr=False)

    def final(self) -> np.ndarray:
        return self.solution[-1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "times": [float(t) for t in self.times],
            "distances": list(self.distances),
            "ratios": list(self.ratios),
            "converged": self.converged,
            "iterations": self.iterations,
        }


def picard_solve(u0: Field, T: float, config: SolverConfig, models: Models, p: float = 1.0, ell: float = 1.0
                 ) -> PicardReport:
    """Iterate ``v <- S(t) u0 + int_0^t S(t - s) C(v(s), v(s)) ds`` on a uniform
    grid of ``config.picard_nodes`` times in ``[0, T]`` (trapezoid rule).

    ``distances[k-1]`` is ``sup_t ||v^k - v^(k-1)||`` in ``X^p_ell`` with
    ``v^0 = S(t) u0``; iteration stops when it drops below ``picard_tol`` and
    fails after three consecutive non-contracting ratios.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    nq = config.picard_nodes
    taus = np.linspace(0.0, T, nq)
    step = taus[1] - taus[0]
    ops = models.operators()
    prop = LinearPropagator(ops, step, tol=min(1e-12, config.picard_tol / 10))
    space, size = models.space, models.size

    linear = np.empty((nq,) + u0.values.shape)
    linear[0] = u0.values
    for q in range(1, nq):
        linear[q] = prop.apply(linear[q - 1])

    def norm(x: np.ndarray) -> float:
        return weighted_seminorm(x, p, ell, 0.0, None, space, size)

    def iterate(v: np.ndarray) -> np.ndarray:
        if ops.coag is None:
            return linear.copy()
        out = np.empty_like(v)
        out[0] = linear[0]
        acc = np.zeros_like(v[0])
        prev = ops.coag.apply(v[0])
        for q in range(1, nq):
            weight = 0.5 if q == 1 else 1.0
            acc = prop.apply(acc + step * weight * prev)
            cur = ops.coag.apply(v[q])
            out[q] = linear[q] + acc + 0.5 * step * cur
            prev = cur
        return out

    current = linear
    distances: list[float] = []
    ratios: list[float] = []
    converged = False
    bad = 0
    for k in range(1, config.picard_kmax + 1):
        nxt = iterate(current)
        d = max(norm(nxt[q] - current[q]) for q in range(nq))
        distances.append(d)
        current = nxt
        if len(distances) > 1:
            ratio = d / distances[-2] if distances[-2] > 0 else 0.0
            ratios.append(ratio)
            bad = bad + 1 if ratio >= 1.0 else 0
            if bad >= 3:
                raise NoContraction("no contraction at this T")
        if d < config.picard_tol:
            converged = True
            break
    return PicardReport(taus, distances, ratios, converged, len(distances), current, linear)
