"""Discrete space and size axes, the state field and the weighted norms.

Space is a periodic box ``[0, L)^d`` with ``n`` points per axis.  Size is a
geometric grid on ``[xi_min, xi_max]``.  Size integrals use weights that are
exact for integrands piecewise linear in ``log(xi)`` between nodes; they are
strictly positive, which the fragmentation and coagulation operators rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SpaceGrid",
    "SizeGrid",
    "Field",
    "quadrature_integrate",
    "size_weight",
    "weighted_seminorm",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform periodic grid on ``[0, L)^dim``."""

    dim: int
    extent: float
    points: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if self.points < 8 or not _is_power_of_two(self.points):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.points}")

    @property
    def spacing(self) -> float:
        return self.extent / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def ncells(self) -> int:
        return self.points ** self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.points) * self.spacing

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of node coordinates, ``indexing='ij'``."""
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the real FFT layout, one array per axis."""
        n, h = self.points, self.spacing
        full = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        half = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
        if self.dim == 1:
            return half
        return np.stack(np.meshgrid(full, half, indexing="ij"))

    def k_squared(self) -> np.ndarray:
        """``|k|^2`` on the real-FFT layout (shape of ``rfftn`` output)."""
        k = self.wavenumbers()
        if self.dim == 1:
            return k * k
        return k[0] ** 2 + k[1] ** 2

    def torus_distance(self, center: tuple[float, ...] | None = None) -> np.ndarray:
        """Periodic distance of every node to ``center`` (origin by default)."""
        L = self.extent
        if center is None:
            center = (0.0,) * self.dim
        sq = np.zeros(self.shape)
        for c, x in zip(center, self.coordinates()):
            dx = np.abs(x - c) % L
            dx = np.minimum(dx, L - dx)
            sq += dx * dx
        return np.sqrt(sq)


@dataclass(frozen=True)
class SizeGrid:
    """Geometric size grid ``xi_i = xi_min * r**i`` with ``m`` nodes."""

    xi_min: float
    xi_max: float
    count: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (0 < self.xi_min < self.xi_max):
            raise ValueError("need 0 < xi_min < xi_max")
        if self.count < 2:
            raise ValueError("size grid needs at least two nodes")
        i = np.arange(self.count)
        log_span = np.log(self.xi_max / self.xi_min)
        nodes = self.xi_min * np.exp(log_span * i / (self.count - 1))
        nodes[0], nodes[-1] = self.xi_min, self.xi_max
        h = log_span / (self.count - 1)
        r = np.exp(h)
        # exact for f linear in log(xi) on each cell [xi_i, xi_{i+1}]
        left = nodes[:-1] * (np.expm1(h) / h - 1.0)
        right = nodes[:-1] * (r - np.expm1(h) / h)
        weights = np.zeros(self.count)
        weights[:-1] += left
        weights[1:] += right
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def ratio(self) -> float:
        return float(np.exp(np.log(self.xi_max / self.xi_min) / (self.count - 1)))

    @property
    def log_step(self) -> float:
        return float(np.log(self.xi_max / self.xi_min) / (self.count - 1))


@dataclass
class Field:
    """Density ``u(x, xi)`` stored space-major, size-minor: shape ``(*space.shape, m)``."""

    values: np.ndarray
    space: SpaceGrid
    size: SizeGrid

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        expected = self.space.shape + (self.size.count,)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grids {expected}")

    @classmethod
    def zeros(cls, space: SpaceGrid, size: SizeGrid) -> "Field":
        return cls(np.zeros(space.shape + (size.count,)), space, size)

    @property
    def is_physical(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.space, self.size)

    def mass(self) -> float:
        """Total mass ``sum_x h^d sum_i xi_i w_i u``."""
        return float(self.space.cell_volume * np.sum(self.values @ (self.size.nodes * self.size.weights)))

    def number(self) -> float:
        return float(self.space.cell_volume * np.sum(self.values @ self.size.weights))


def quadrature_integrate(f: np.ndarray, grid: SizeGrid) -> float | np.ndarray:
    """Integrate a size profile over ``[xi_min, xi_max]``.

    ``f`` may carry leading axes; the last axis must match the grid.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite integrand")
    out = f @ grid.weights
    return float(out) if np.ndim(out) == 0 else out


def size_weight(grid: SizeGrid, ell: float | str) -> np.ndarray:
    """Moment weight on the nodes: ``1`` for ``ell == 0``, ``1 + xi**ell``
    for ``ell > 0`` and ``xi`` for ``ell == 'xi'`` (the mass weight)."""
    if isinstance(ell, str):
        if ell != "xi":
            raise ValueError(f"unknown weight {ell!r}")
        return grid.nodes.copy()
    if ell < 0:
        raise ValueError("ell must be non-negative")
    if ell == 0:
        return np.ones(grid.count)
    return 1.0 + grid.nodes ** ell


def weighted_seminorm(
    u: np.ndarray | Field,
    p: float,
    ell: float | str,
    s: float,
    beta_envelope: np.ndarray | Callable[[np.ndarray], np.ndarray] | None,
    space: SpaceGrid | None = None,
    size: SizeGrid | None = None,
) -> float:
    """``L^p(x; L^1(xi, w_ell * beta^s dxi))`` norm of ``u``.

    ``beta_envelope`` may be node values, a callable of ``xi`` or anything with
    a ``beta_envelope`` method (a rate model); it is only consulted when
    ``s > 0``.  ``p`` may be ``numpy.inf``.
    """
    if isinstance(u, Field):
        space, size, vals = u.space, u.size, u.values
    else:
        vals = np.asarray(u, dtype=float)
    if space is None or size is None:
        raise ValueError("grids are required for a bare array")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    wt = size.weights * size_weight(size, ell)
    if s != 0:
        wt = wt * _envelope_values(beta_envelope, size) ** s
    inner = np.abs(vals) @ wt
    if np.isinf(p):
        return float(np.max(inner))
    hd = space.cell_volume
    if p == 1:
        return float(hd * np.sum(inner))
    return float((hd * np.sum(inner ** p)) ** (1.0 / p))


def _envelope_values(beta, size: SizeGrid) -> np.ndarray:
    if beta is None:
        raise ValueError("s > 0 needs the fragmentation envelope")
    if hasattr(beta, "beta_envelope"):
        return np.asarray(beta.beta_envelope(size.nodes), dtype=float)
    if callable(beta):
        return np.asarray(beta(size.nodes), dtype=float)
    return np.asarray(beta, dtype=float)
