"""Rates, fragmentation and coagulation kernels, moment functionals and the
hypothesis certificate.

The size integrals of a fragmentation kernel are evaluated on ``(0, eta]``
after the substitution ``xi = s * eta``: Gauss-Legendre panels spaced
geometrically in ``s`` down to ``S_LOW`` plus a local power-law tail on
``(0, S_LOW]``.  The tail is exact for power kernels and returns ``inf`` when
the integrand is not integrable at zero.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grids import SizeGrid

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]

S_LOW = 1e-14
GAUSS_ORDER = 16
DEFAULT_ETAS = (10.0, 30.0, 100.0, 300.0, 1000.0)
DEFAULT_ELL_GRID = (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 9.0, 17.0, 33.0, 65.0)
KERNEL_TABLE_HEADER = "# fragkin-kernel v1"


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RateModel:
    """Scalar diffusion rate ``alpha(xi)`` and fragmentation rate
    ``beta(x, xi) = modulation(x, xi) * beta_envelope(xi)``.

    ``beta_modulation`` takes the tuple of space coordinate arrays and the
    size nodes and returns factors broadcastable to ``(*space, m)``; they must
    lie in ``[1, C_beta]``.
    """

    alpha_fn: ArrayFn
    beta_fn: ArrayFn
    dim: int = 1
    beta_modulation: Callable[[tuple[np.ndarray, ...], np.ndarray], np.ndarray] | None = None
    C_beta: float = 1.0
    mode: str = "custom"
    theta_alpha: float | None = None
    theta_beta: float | None = None
    c_alpha_lower: float | None = None
    c_alpha_upper: float | None = None
    c_beta_lower: float | None = None
    c_beta_upper: float | None = None
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def power(
        cls,
        theta_alpha: float,
        theta_beta: float,
        dim: int = 1,
        c_alpha: float = 1.0,
        c_beta: float = 1.0,
        **kwargs: Any,
    ) -> "RateModel":
        """``alpha = c_alpha (1+xi)^(-2 theta_alpha/d)``, ``beta = c_beta (1+xi)^theta_beta``."""
        if theta_alpha <= 0 or theta_beta <= 0:
            raise ValueError("power rates need positive exponents")
        a_exp = 2.0 * theta_alpha / dim

        def alpha(xi):
            return c_alpha * (1.0 + np.asarray(xi, dtype=float)) ** (-a_exp)

        def beta(xi):
            return c_beta * (1.0 + np.asarray(xi, dtype=float)) ** theta_beta

        return cls(
            alpha,
            beta,
            dim=dim,
            mode="power",
            theta_alpha=theta_alpha,
            theta_beta=theta_beta,
            c_alpha_lower=c_alpha,
            c_alpha_upper=c_alpha,
            c_beta_lower=c_beta,
            c_beta_upper=c_beta,
            params={"theta_alpha": theta_alpha, "theta_beta": theta_beta, "c_alpha": c_alpha, "c_beta": c_beta},
            **kwargs,
        )

    @classmethod
    def constant(cls, alpha: float, beta: float, dim: int = 1, **kwargs: Any) -> "RateModel":
        return cls(
            lambda xi: np.full(np.shape(xi), float(alpha)),
            lambda xi: np.full(np.shape(xi), float(beta)),
            dim=dim,
            mode="constant",
            params={"alpha": alpha, "beta": beta},
            **kwargs,
        )

    @classmethod
    def tabulated(cls, xi: Sequence[float], alpha: Sequence[float], beta: Sequence[float], dim: int = 1,
                  **kwargs: Any) -> "RateModel":
        """Piecewise linear interpolation in ``log(xi)``, constant beyond the table."""
        lx = np.log(np.asarray(xi, dtype=float))
        a = np.asarray(alpha, dtype=float)
        b = np.asarray(beta, dtype=float)
        if not (lx.shape == a.shape == b.shape) or lx.ndim != 1 or np.any(np.diff(lx) <= 0):
            raise ValueError("tabulated rates need matching increasing tables")
        return cls(
            lambda s: np.interp(np.log(s), lx, a),
            lambda s: np.interp(np.log(s), lx, b),
            dim=dim,
            mode="tabulated",
            params={"xi": list(map(float, xi)), "alpha": list(map(float, a)), "beta": list(map(float, b))},
            **kwargs,
        )

    def alpha(self, xi) -> np.ndarray:
        return np.asarray(self.alpha_fn(np.asarray(xi, dtype=float)), dtype=float)

    def beta_envelope(self, xi) -> np.ndarray:
        return np.asarray(self.beta_fn(np.asarray(xi, dtype=float)), dtype=float)

    def beta_field(self, coords: tuple[np.ndarray, ...] | None, xi: np.ndarray) -> np.ndarray:
        """``beta(x, xi)``: shape ``(m,)`` when unmodulated, else ``(*space, m)``."""
        env = self.beta_envelope(xi)
        if self.beta_modulation is None or coords is None:
            return env
        mod = np.asarray(self.beta_modulation(tuple(c[..., None] for c in coords), xi), dtype=float)
        return mod * env


def kappa_delta(rates: RateModel, delta: float, size: SizeGrid) -> float:
    """``min_i alpha(xi_i)^delta * beta(xi_i)^(1-delta)`` over the size nodes."""
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    a = rates.alpha(size.nodes)
    b = rates.beta_envelope(size.nodes)
    return float(np.min(a ** delta * b ** (1.0 - delta)))


def max_delta(theta_alpha: float, theta_beta: float, dim: int) -> float:
    """Largest ``delta`` keeping ``alpha^delta * beta^(1-delta)`` bounded below
    for power rates: ``d theta_beta / (2 theta_alpha + d theta_beta)``."""
    if theta_alpha <= 0 or theta_beta <= 0:
        raise ValueError("exponents must be positive")
    return dim * theta_beta / (2.0 * theta_alpha + dim * theta_beta)


def diffusion_condition_number(samples: np.ndarray) -> float:
    """``|alpha| / lambda_min(alpha)`` for matrix samples of shape
    ``(n_xi, n_x, d, d)``; sup and inf over ``x`` per size, sup over sizes."""
    a = np.asarray(samples, dtype=float)
    if a.ndim != 4 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected samples of shape (n_xi, n_x, d, d)")
    if not np.allclose(a, np.swapaxes(a, -1, -2)):
        raise ValueError("diffusion matrices must be symmetric")
    eig = np.linalg.eigvalsh(a)
    lam_min = eig[..., 0].min(axis=1)
    lam_max = eig[..., -1].max(axis=1)
    if np.any(lam_min <= 0):
        return math.inf
    return float(np.max(lam_max / lam_min))


# --------------------------------------------------------------------------
# fragmentation kernels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FragKernel:
    """Fragmentation kernel ``gamma(xi, eta)``, zero for ``xi > eta``."""

    family: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    params: dict[str, Any] = field(default_factory=dict, compare=False)
    is_zero: bool = False

    def __call__(self, xi, eta) -> np.ndarray:
        xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
        out = np.zeros(xi.shape)
        mask = (xi <= eta) & (xi > 0)
        if np.any(mask):
            out[mask] = self.evaluator(xi[mask], eta[mask])
        return out

    def scaled(self, factor: float) -> "FragKernel":
        ev = self.evaluator
        return FragKernel(
            self.family,
            lambda xi, eta: factor * ev(xi, eta),
            params={**self.params, "scale": factor * self.params.get("scale", 1.0)},
            is_zero=self.is_zero or factor == 0,
        )


def power_kernel(nu: float) -> FragKernel:
    """``(nu+2)/eta * (xi/eta)^nu`` with ``-1 < nu <= 0``."""
    if not -1.0 < nu <= 0.0:
        raise ValueError(f"power kernel needs -1 < nu <= 0, got {nu}")

    def ev(xi, eta):
        return (nu + 2.0) / eta * (xi / eta) ** nu

    return FragKernel("power", ev, params={"nu": nu})


def homogeneous_kernel(h: ArrayFn, name: str = "homogeneous") -> FragKernel:
    """``h(xi/eta)/eta`` with ``int_0^1 s h(s) ds = 1``."""

    def ev(xi, eta):
        return np.asarray(h(xi / eta), dtype=float) / eta

    return FragKernel("homogeneous", ev, params={"profile": name})


def separable_kernel(h0: ArrayFn, h1: ArrayFn | None = None, name: str = "separable") -> FragKernel:
    """``eta h0(xi) / h1(eta)`` with ``h1(eta) = int_0^eta xi h0(xi) dxi``.

    ``h1`` is computed by quadrature when not supplied.
    """
    if h1 is None:

        def h1(eta):
            eta = np.atleast_1d(np.asarray(eta, dtype=float))
            uniq, inv = np.unique(eta, return_inverse=True)
            vals = np.array([_integrate_unit(lambda s, e=e: e * s * e * np.asarray(h0(s * e), dtype=float))
                             for e in uniq])
            return vals[inv].reshape(eta.shape)

    def ev(xi, eta):
        return eta * np.asarray(h0(xi), dtype=float) / h1(eta)

    return FragKernel("separable", ev, params={"profile": name})


def tabulated_profile_kernel(s: Sequence[float], h: Sequence[float]) -> FragKernel:
    """Homogeneous kernel from a profile table ``h(s)``, ``0 < s <= 1``,
    linearly interpolated and held constant outside the table."""
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if s.ndim != 1 or s.shape != h.shape or np.any(np.diff(s) <= 0) or s[0] <= 0 or s[-1] > 1:
        raise ValueError("profile table needs increasing s in (0, 1] and matching h")
    k = homogeneous_kernel(lambda x: np.interp(x, s, h), name="table")
    return FragKernel("tabulated", k.evaluator, params={"layout": "profile", "s": s.tolist(), "h": h.tolist()},
                      is_zero=bool(np.all(h == 0)))


def tabulated_matrix_kernel(nodes: Sequence[float], matrix: np.ndarray) -> FragKernel:
    """Kernel from values ``matrix[i, j] = gamma(x_i, x_j)`` (upper triangle),
    bilinear in ``(log xi, log eta)``, zero outside the table."""
    x = np.asarray(nodes, dtype=float)
    g = np.triu(np.asarray(matrix, dtype=float))
    if g.shape != (x.size, x.size) or np.any(np.diff(x) <= 0) or x[0] <= 0:
        raise ValueError("matrix table needs increasing positive nodes and a square matrix")
    interp = RegularGridInterpolator((np.log(x), np.log(x)), g, bounds_error=False, fill_value=0.0)

    def ev(xi, eta):
        return interp(np.stack([np.log(xi), np.log(eta)], axis=-1))

    return FragKernel("tabulated", ev, params={"layout": "matrix", "nodes": x.tolist()},
                      is_zero=bool(np.all(g == 0)))


def zero_kernel() -> FragKernel:
    return FragKernel("tabulated", lambda xi, eta: np.zeros(np.shape(xi)), params={"layout": "zero"}, is_zero=True)


def load_kernel_table(source: str | Path) -> FragKernel:
    """Read a ``# fragkin-kernel v1`` table.

    Two layouts are accepted, selected by a ``# layout: ...`` line:

    ``profile``
        two columns ``s h(s)``;
    ``matrix``
        a ``# nodes: x1 ... xm`` line followed by ``m`` triangular rows, row
        ``i`` holding ``gamma(x_i, x_j)`` for ``j = i .. m-1``.
    """
    text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != KERNEL_TABLE_HEADER:
        raise ValueError(f"kernel table must start with {KERNEL_TABLE_HEADER!r}")
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            meta[key.strip()] = val.strip()
        else:
            rows.append([float(v) for v in ln.split()])
    layout = meta.get("layout", "profile")
    if layout == "profile":
        if any(len(r) != 2 for r in rows):
            raise ValueError("profile layout needs two columns")
        arr = np.array(rows)
        return tabulated_profile_kernel(arr[:, 0], arr[:, 1])
    if layout == "matrix":
        nodes = [float(v) for v in meta.get("nodes", "").split()]
        m = len(nodes)
        if len(rows) != m or any(len(r) != m - i for i, r in enumerate(rows)):
            raise ValueError("matrix layout needs triangular rows matching the nodes")
        g = np.zeros((m, m))
        for i, r in enumerate(rows):
            g[i, i:] = r
        return tabulated_matrix_kernel(nodes, g)
    raise ValueError(f"unknown kernel table layout {layout!r}")


def dump_kernel_table(kernel: FragKernel) -> str:
    """Inverse of :func:`load_kernel_table` for tabulated profile kernels."""
    if kernel.params.get("layout") != "profile":
        raise ValueError("only profile tables can be written")
    lines = [KERNEL_TABLE_HEADER, "# layout: profile"]
    lines += [f"{s!r} {h!r}" for s, h in zip(kernel.params["s"], kernel.params["h"])]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# moment functionals
# --------------------------------------------------------------------------


def _panels(m_quad: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[S_LOW, 1]``: geometric panels, Gauss-Legendre inside."""
    n_panels = max(1, m_quad // GAUSS_ORDER)
    edges = np.geomspace(S_LOW, 1.0, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


_PANEL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _unit_rule(m_quad: int) -> tuple[np.ndarray, np.ndarray]:
    if m_quad not in _PANEL_CACHE:
        _PANEL_CACHE[m_quad] = _panels(m_quad)
    return _PANEL_CACHE[m_quad]


def _integrate_unit(g: ArrayFn, m_quad: int = 1024) -> float:
    """``int_0^1 g(s) ds`` for ``g`` with at most power-law behaviour at 0."""
    s, w = _unit_rule(m_quad)
    body = float(np.dot(w, g(s)))
    g1, g2 = (float(v) for v in np.asarray(g(np.array([S_LOW, 2.0 * S_LOW])), dtype=float))
    if g1 == 0.0:
        return body
    if g1 < 0 or g2 <= 0:
        return body + g1 * S_LOW
    a = math.log(g2 / g1) / math.log(2.0)
    if a <= -1.0:
        return math.inf
    return body + g1 * S_LOW / (a + 1.0)


def kernel_moment(kernel: FragKernel, eta: float, weight: ArrayFn, m_quad: int = 1024) -> float:
    """``int_0^eta weight(xi) gamma(xi, eta) dxi``."""
    if eta <= 0:
        raise ValueError("eta must be positive")

    def g(s):
        vals = kernel(s * eta, eta)
        if np.any(vals < 0):
            raise ValueError("kernel must be non-negative")
        return weight(s * eta) * vals * eta

    return _integrate_unit(g, m_quad)


def kernel_partial_moment(kernel: FragKernel, eta: float, upper: float, weight: ArrayFn,
                           m_quad: int = 1024) -> float:
    """``int_0^upper weight(xi) gamma(xi, eta) dxi`` for ``0 < upper <= eta``."""
    if not 0 < upper <= eta:
        raise ValueError("need 0 < upper <= eta")

    def g(s):
        vals = kernel(s * upper, eta)
        if np.any(vals < 0):
            raise ValueError("kernel must be non-negative")
        return weight(s * upper) * vals * upper

    return _integrate_unit(g, m_quad)


def frag_conservativity_residual(kernel: FragKernel, eta: float, m_quad: int = 1024,
                                 grid: SizeGrid | None = None) -> float:
    """``|int_0^eta xi gamma(xi, eta) dxi - eta| / eta``.

    With ``grid`` the integral is the size-grid quadrature over the nodes
    ``<= eta`` (the rule the discrete operators use) instead of the
    high-order rule.
    """
    if m_quad < 64:
        raise ValueError("m_quad must be at least 64")
    if grid is not None:
        xi = grid.nodes
        vals = kernel(xi, eta)
        if np.any(vals < 0):
            raise ValueError("kernel must be non-negative")
        mass = float(np.dot(grid.weights, xi * vals))
    else:
        mass = kernel_moment(kernel, eta, lambda x: x, m_quad)
    return abs(mass - eta) / eta


def _check_etas(eta_samples: Sequence[float]) -> np.ndarray:
    etas = np.asarray(eta_samples, dtype=float)
    if etas.size < 4 or np.any(np.diff(etas) <= 0):
        raise ValueError("need at least 4 increasing eta samples")
    return etas


def sigma_ell_profile(kernel: FragKernel, ell: float, eta_samples: Sequence[float], m_quad: int = 1024) -> np.ndarray:
    """``eta^-ell int_0^eta xi^ell gamma dxi`` at every sample."""
    etas = np.asarray(eta_samples, dtype=float)
    return np.array([kernel_moment(kernel, e, lambda x: (x / e) ** ell, m_quad) for e in etas])


def sigma_zero_ell_profile(kernel: FragKernel, ell: float, eta_samples: Sequence[float],
                           m_quad: int = 1024) -> np.ndarray:
    """``eta^-ell int_0^eta gamma dxi`` at every sample."""
    etas = np.asarray(eta_samples, dtype=float)
    return np.array([kernel_moment(kernel, e, lambda x: np.ones_like(x), m_quad) * e ** (-ell) for e in etas])


def _limsup_proxy(values: np.ndarray) -> float:
    half = (values.size + 1) // 2
    return float(np.max(values[-half:]))


def sigma_ell(kernel: FragKernel, ell: float, eta_samples: Sequence[float] = DEFAULT_ETAS,
              m_quad: int = 1024) -> float:
    """Finite-eta proxy of ``sigma_ell``: max over the largest half of the samples."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return _limsup_proxy(sigma_ell_profile(kernel, ell, _check_etas(eta_samples), m_quad))


def sigma_zero_ell(kernel: FragKernel, ell: float, eta_samples: Sequence[float] = DEFAULT_ETAS,
                   m_quad: int = 1024) -> float:
    """Finite-eta proxy of ``sigma_{0,ell}`` (fragment count over ``eta^ell``)."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return _limsup_proxy(sigma_zero_ell_profile(kernel, ell, _check_etas(eta_samples), m_quad))


def _stabilizes(values: np.ndarray, rel: float = 0.1) -> bool:
    """Proxy settles when it grows by less than ``rel`` between the two largest eta."""
    a, b = values[-2], values[-1]
    if not (np.isfinite(a) and np.isfinite(b)):
        return False
    if b <= a:
        return True
    return (b - a) <= rel * abs(a)


@dataclass(frozen=True)
class EllBars:
    ell0_bar: float | None
    ell1_bar: float | None
    stable0: bool
    stable1: bool

    def __iter__(self):
        return iter((self.ell0_bar, self.ell1_bar))


def _first_stable_tail(ells: np.ndarray, flags: list[bool]) -> float | None:
    # smallest ell from which every larger grid ell is stable too
    result = None
    for ell, ok in zip(ells[::-1], flags[::-1]):
        if not ok:
            break
        result = float(ell)
    if result is not None and result == float(ells[-1]) and len(ells) > 1:
        return None
    return result


def estimate_ell_bars(kernel: FragKernel, ell_grid: Sequence[float] = DEFAULT_ELL_GRID,
                      eta_samples: Sequence[float] = DEFAULT_ETAS, m_quad: int = 1024) -> EllBars:
    """Grid search for the finiteness thresholds of the two moment families.

    ``None`` marks an indeterminate estimate (no stable tail on the grid).
    """
    ells = np.asarray(ell_grid, dtype=float)
    if np.any(np.diff(ells) <= 0):
        raise ValueError("ell_grid must be ascending")
    etas = _check_etas(eta_samples)
    f0 = [_stabilizes(sigma_zero_ell_profile(kernel, ell, etas, m_quad)) for ell in ells]
    f1 = [_stabilizes(sigma_ell_profile(kernel, ell, etas, m_quad)) for ell in ells]
    e0 = _first_stable_tail(ells, f0)
    e1 = _first_stable_tail(ells, f1)
    return EllBars(e0, e1, e0 is not None, e1 is not None)


@dataclass
class MomentReport:
    sigma0_table: dict[float, float]
    sigma_table: dict[float, float]
    ell0_bar: float | None
    ell1_bar: float | None
    sigma_inf_estimate: float
    eta_samples: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma0_table": {repr(k): v for k, v in self.sigma0_table.items()},
            "sigma_table": {repr(k): v for k, v in self.sigma_table.items()},
            "ell0_bar": self.ell0_bar,
            "ell1_bar": self.ell1_bar,
            "sigma_inf_estimate": self.sigma_inf_estimate,
            "eta_samples": self.eta_samples,
        }


def moment_report(kernel: FragKernel, ell_grid: Sequence[float] = DEFAULT_ELL_GRID,
                  eta_samples: Sequence[float] = DEFAULT_ETAS, m_quad: int = 1024) -> MomentReport:
    ells = [float(e) for e in ell_grid]
    s0 = {e: sigma_zero_ell(kernel, e, eta_samples, m_quad) for e in ells}
    s1 = {e: sigma_ell(kernel, e, eta_samples, m_quad) for e in ells}
    bars = estimate_ell_bars(kernel, ells, eta_samples, m_quad)
    tail = [v for e, v in s1.items() if e >= 1.0]
    return MomentReport(s0, s1, bars.ell0_bar, bars.ell1_bar, float(min(tail)) if tail else math.nan,
                        [float(e) for e in eta_samples])


def check_separable_conditions(h0: ArrayFn, c1: float, c2: float, p_h0: float,
                               eta_samples: Sequence[float] = DEFAULT_ETAS, m_quad: int = 1024) -> dict[str, Any]:
    """Empirical doubling and reverse-Hoelder checks for a separable profile ``h0``."""
    doubling, reverse = [], []
    for eta in eta_samples:
        lo = _integrate_unit(lambda s: 2 * eta * np.asarray(h0(2 * eta * s), dtype=float), m_quad)
        hi = eta * float(np.mean(np.asarray(h0(eta * (1.0 + (np.arange(4096) + 0.5) / 4096)), dtype=float)))
        doubling.append(lo <= c1 * hi)
        lp = _integrate_unit(lambda s: np.abs(eta * s * np.asarray(h0(eta * s), dtype=float)) ** p_h0, m_quad)
        first = _integrate_unit(lambda s: eta * s * np.asarray(h0(eta * s), dtype=float), m_quad)
        reverse.append(lp ** (1.0 / p_h0) <= c2 * first)
    return {"doubling": all(doubling), "reverse_holder": all(reverse),
            "per_eta": {"doubling": doubling, "reverse_holder": reverse}}


# --------------------------------------------------------------------------
# coagulation kernels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoagKernel:
    """Symmetric coagulation kernel with candidate domination constants."""

    family: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    c_kappa: float
    rho: float
    spatial_modulation: Callable[[tuple[np.ndarray, ...]], np.ndarray] | None = None
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.c_kappa > 0:
            raise ValueError("c_kappa must be positive")

    def __call__(self, xi, eta) -> np.ndarray:
        xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
        return np.asarray(self.evaluator(xi, eta), dtype=float)

    def matrix(self, size: SizeGrid) -> np.ndarray:
        x = size.nodes
        return self(x[:, None], x[None, :])


def constant_coag(kappa0: float, c_kappa: float | None = None, rho: float = 0.5, **kw: Any) -> CoagKernel:
    return CoagKernel("constant", lambda a, b: np.full(np.shape(a), float(kappa0)),
                      c_kappa if c_kappa is not None else kappa0 / 2.0, rho, params={"kappa0": kappa0}, **kw)


def sum_power_coag(kappa0: float, exponent: float, c_kappa: float | None = None, rho: float = 0.5,
                   **kw: Any) -> CoagKernel:
    """``kappa0 [(1+xi)^a + (1+eta)^a]``."""
    def ev(a, b):
        return kappa0 * ((1.0 + a) ** exponent + (1.0 + b) ** exponent)

    return CoagKernel("sum_power", ev, c_kappa if c_kappa is not None else kappa0, rho,
                      params={"kappa0": kappa0, "exponent": exponent}, **kw)


def product_power_coag(kappa0: float, exponent: float, c_kappa: float, rho: float = 0.5, **kw: Any) -> CoagKernel:
    """``kappa0 (xi eta)^a``."""
    return CoagKernel("product_power", lambda a, b: kappa0 * (a * b) ** exponent, c_kappa, rho,
                      params={"kappa0": kappa0, "exponent": exponent}, **kw)


def tabulated_coag(nodes: Sequence[float], matrix: np.ndarray, c_kappa: float, rho: float, **kw: Any) -> CoagKernel:
    x = np.asarray(nodes, dtype=float)
    g = np.asarray(matrix, dtype=float)
    interp = RegularGridInterpolator((np.log(x), np.log(x)), g, bounds_error=False, fill_value=None)

    def ev(a, b):
        return interp(np.stack([np.log(a), np.log(b)], axis=-1))

    return CoagKernel("tabulated", ev, c_kappa, rho, params={"nodes": x.tolist()}, **kw)


def domination_ratio(kernel: CoagKernel, rates: RateModel, size: SizeGrid) -> float:
    """``max_ij kappa_ij / (beta_i^rho + beta_j^rho)`` over node pairs."""
    b = rates.beta_envelope(size.nodes) ** kernel.rho
    return float(np.max(kernel.matrix(size) / (b[:, None] + b[None, :])))


# --------------------------------------------------------------------------
# certificate
# --------------------------------------------------------------------------


@dataclass
class Clause:
    name: str
    passed: bool | None
    detail: str
    values: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "n/a "}[self.passed]
        return f"[{status}] ({self.name}) {self.detail}"


@dataclass
class CertificateReport:
    clauses: list[Clause]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.clauses)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.clauses if c.passed is False]

    def clause(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def text(self) -> str:
        lines = [c.line() for c in self.clauses]
        lines += [f"warning: {w}" for w in self.warnings]
        lines.append("certificate: " + ("PASS" if self.passed else "FAIL " + ", ".join(self.failed)))
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failed": self.failed,
            "clauses": [{"name": c.name, "passed": c.passed, "detail": c.detail, "values": c.values}
                        for c in self.clauses],
            "warnings": list(self.warnings),
        }


def check_hypotheses(
    rates: RateModel,
    frag: FragKernel,
    coag: CoagKernel,
    p: float,
    ell: float,
    delta: float,
    report: MomentReport,
    size: SizeGrid | None = None,
    space_coords: tuple[np.ndarray, ...] | None = None,
    residual_tol: float = 1e-6,
    sigma_inf_tol: float = 0.1,
) -> CertificateReport:
    """Evaluate every hypothesis on rates and kernels, clause by clause.

    Sampled clauses use the nodes of ``size`` (default: 256 nodes on
    ``[0.01, 100]``).  Every bound is echoed in the clause detail.
    """
    if not 0.0 < coag.rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if p < 1:
        raise ValueError("p must be >= 1")
    size = size or SizeGrid(0.01, 100.0, 256)
    d = rates.dim
    xi = size.nodes
    alpha = rates.alpha(xi)
    beta = rates.beta_envelope(xi)
    rho = coag.rho
    out: list[Clause] = []
    warnings: list[str] = []

    a_ok = bool(np.all(np.isfinite(alpha)) and np.all(alpha > 0))
    out.append(Clause("diffusion-positive", a_ok, f"alpha > 0 on nodes: min alpha = {alpha.min():.6g}, max = {alpha.max():.6g}",
                      {"alpha_min": float(alpha.min()), "alpha_max": float(alpha.max())}))

    beta0 = float(beta.min())
    sandwich = beta0 > 0
    mod_detail = "no spatial modulation"
    if rates.beta_modulation is not None and space_coords is not None:
        mod = np.broadcast_to(rates.beta_field(space_coords, xi) / beta, tuple(space_coords[0].shape) + (xi.size,))
        sandwich = sandwich and bool(mod.min() >= 1.0 - 1e-12 and mod.max() <= rates.C_beta * (1 + 1e-12))
        mod_detail = f"modulation in [{mod.min():.6g}, {mod.max():.6g}] vs [1, C_beta={rates.C_beta:.6g}]"
    out.append(Clause("frag-rate-bounds", sandwich, f"beta_0 = min beta = {beta0:.6g} > 0; {mod_detail}", {"beta0": beta0}))

    xx, ee = np.meshgrid(xi, xi, indexing="ij")
    g = frag(xx, ee)
    nonneg = bool(np.all(g >= 0) and np.all(g[xx > ee] == 0))
    out.append(Clause("kernel-support", nonneg, "gamma >= 0 and gamma(xi, eta) = 0 for xi > eta on node pairs"))

    residuals = [frag_conservativity_residual(frag, e) for e in report.eta_samples]
    r_max = float(max(residuals))
    out.append(Clause("kernel-conservative", r_max <= residual_tol,
                      f"max conservativity residual {r_max:.3e} <= {residual_tol:.1e}", {"residual": r_max}))

    e0, e1 = report.ell0_bar, report.ell1_bar
    out.append(Clause("fragment-count-finite", e0 is not None, f"ell0_bar = {e0} (None = indeterminate)", {"ell0_bar": e0}))
    s_inf = report.sigma_inf_estimate
    out.append(Clause("mass-spread-small", bool(np.isfinite(s_inf) and s_inf <= sigma_inf_tol),
                      f"sigma_inf proxy = {s_inf:.6g} <= {sigma_inf_tol}", {"sigma_inf": s_inf}))
    bars_ok = e0 is not None and e1 is not None and e0 < 1 and e1 < 1
    out.append(Clause("moment-thresholds", bars_ok, f"ell0_bar = {e0}, ell1_bar = {e1}, both < 1"))

    kd = kappa_delta(rates, delta, size)
    out.append(Clause("smoothing-balance", kd > 0, f"kappa_delta = {kd:.6g} > 0 at delta = {delta}", {"kappa_delta": kd}))
    if rates.mode == "power":
        exponent = -2.0 * rates.theta_alpha * delta / d + (1.0 - delta) * rates.theta_beta
        if exponent < 0:
            warnings.append(
                f"kappa_delta decays like (1+xi)^{exponent:.4g}: delta = {delta} exceeds "
                f"delta* = {max_delta(rates.theta_alpha, rates.theta_beta, d):.6g}; positive only on the truncated grid")

    km = coag.matrix(size)
    asym = float(np.max(np.abs(km - km.T)))
    out.append(Clause("coag-symmetric", asym <= 1e-12 * max(1.0, float(np.abs(km).max())),
                      f"max |kappa - kappa^T| = {asym:.3e}"))
    ratio = domination_ratio(coag, rates, size)
    out.append(Clause("coag-dominated", ratio <= coag.c_kappa * (1 + 1e-12),
                      f"max kappa/(beta^rho + beta^rho) = {ratio:.6g} <= c_kappa = {coag.c_kappa:.6g} (rho = {rho})",
                      {"ratio": ratio}))
    if coag.spatial_modulation is not None:
        warnings.append("spatial coagulation modulation is separable in v1; bound checked with factor 1")

    p_bound = d / (2.0 * (1.0 - rho) * delta) if delta > 0 else math.inf
    out.append(Clause("integrability", bool(p >= 2 and p_bound < p),
                      f"2 <= p = {p:g} and d/(2(1-rho)delta) = {p_bound:.6g} < p", {"p_bound": p_bound}))

    ell_floor = max(e0 if e0 is not None else math.inf, 1.0)
    out.append(Clause("ell-admissible", ell > ell_floor, f"ell = {ell:g} > max(ell0_bar, 1) = {ell_floor:g}"))

    if rates.mode == "power":
        ta, tb = rates.theta_alpha, rates.theta_beta
        env_a = alpha * (1.0 + xi) ** (2.0 * ta / d)
        env_b = beta * (1.0 + xi) ** (-tb)
        env_ok = bool(env_a.min() >= rates.c_alpha_lower * (1 - 1e-12) and env_a.max() <= rates.c_alpha_upper * (1 + 1e-12)
                      and env_b.min() >= rates.c_beta_lower * (1 - 1e-12) and env_b.max() <= rates.c_beta_upper * (1 + 1e-12))
        out.append(Clause("power-envelopes", env_ok, f"alpha(1+xi)^(2 theta_a/d) in [{env_a.min():.6g}, {env_a.max():.6g}], "
                                         f"beta(1+xi)^(-theta_b) in [{env_b.min():.6g}, {env_b.max():.6g}]"))
        mono = bool(np.all(np.diff(alpha) <= 0) and np.all(np.diff(beta) >= 0))
        out.append(Clause("power-monotone", mono, "alpha non-increasing and beta non-decreasing on nodes"))

        l1 = e1 if e1 is not None else math.nan
        l0 = e0 if e0 is not None else math.nan
        p_dual = p / (p - 1.0) if p > 1 else math.inf
        b_ii = l1 + (1.0 - rho) * tb
        b_iii = 2.0 * delta * (1.0 - l1) * p_dual / (d + 2.0 * delta * p_dual)
        b_iv = 1.0 - l0
        out.append(Clause("growth-order", bool(0 < ta < tb), f"0 < theta_alpha = {ta:g} < theta_beta = {tb:g}",
                          {"bound": tb}))
        out.append(Clause("growth-diffusion", bool(ta < b_ii),
                          f"theta_alpha = {ta:g} < ell1_bar + (1-rho) theta_beta = {b_ii:.6g}", {"bound": b_ii}))
        out.append(Clause("growth-fragmentation", bool(tb < b_iii),
                          f"theta_beta = {tb:g} < 2 delta (1-ell1_bar) p'/(d + 2 delta p') = {b_iii:.6g} (p' = {p_dual:.6g})",
                          {"bound": b_iii, "p_dual": p_dual}))
        out.append(Clause("growth-fragment-count", bool(tb < b_iv), f"theta_beta = {tb:g} < 1 - ell0_bar = {b_iv:.6g}",
                          {"bound": b_iv}))
    else:
        for name in ("power-envelopes", "power-monotone", "growth-order", "growth-diffusion",
                     "growth-fragmentation", "growth-fragment-count"):
            out.append(Clause(name, None, "power-rate clause; rates are not in power mode"))
    return CertificateReport(out, warnings)
