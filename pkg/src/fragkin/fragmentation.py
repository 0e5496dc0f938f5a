"""Discrete fragmentation operator with exact discrete mass conservation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grids import SizeGrid, SpaceGrid
from .kernels import FragKernel, RateModel, kernel_partial_moment

logger = logging.getLogger(__name__)


@dataclass
class FragOperator:
    """``B u = B+ u - B- u`` on a size grid.

    ``gain[i, j]`` holds the rescaled kernel value for a parent at node ``j``
    and daughters at node ``i < j``.  ``under_mass[j]`` is the part of a
    parent's mass that lands below ``xi_min``; per column

        sum_i xi_i w_i gain[i, j] + under_mass[j] = xi_j.
    """

    size: SizeGrid
    gain: np.ndarray
    under_mass: np.ndarray
    beta: np.ndarray
    rescale: np.ndarray = field(repr=False)
    _gain_t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._gain_t = np.ascontiguousarray(self.gain.T)

    @property
    def beta_max(self) -> float:
        return float(np.max(self.beta)) if self.beta.size else 0.0

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Rate ``B u``; ``u`` has shape ``(..., m)``."""
        rate, _ = self.apply_with_underflow(u)
        return rate

    def apply_with_underflow(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rate ``B u`` and the per-cell mass rate lost below ``xi_min``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.size.count:
            raise ValueError(f"shape mismatch: field has {u.shape[-1]} sizes, operator {self.size.count}")
        flux = self.beta * u                      # beta(x, xi_j) u_j
        gain = (flux * self.size.weights) @ self._gain_t
        under = (flux * self.size.weights) @ self.under_mass
        return gain - flux, under

    def loss_rate(self) -> np.ndarray:
        return self.beta


def build_frag_operator(
    kernel: FragKernel,
    rates: RateModel,
    size: SizeGrid,
    space: SpaceGrid | None = None,
) -> FragOperator:
    """Sample the kernel on node pairs and rescale each column so the resolved
    daughter mass plus the mass below ``xi_min`` equals the parent mass.

    With a space grid and a modulated rate model the loss rates carry the
    spatial factor (shape ``(*space, m)``); the gain matrix is shared.
    """
    xi, w = size.nodes, size.weights
    m = size.count
    coords = space.coordinates() if (space is not None and rates.beta_modulation is not None) else None
    beta = np.asarray(rates.beta_field(coords, xi), dtype=float)
    env = rates.beta_envelope(xi)

    if kernel.is_zero:
        # fragments vanish: the whole parent mass goes to the ledger
        return FragOperator(size, np.zeros((m, m)), xi.copy(), beta, np.ones(m))

    samples = kernel(xi[:, None], xi[None, :])
    if np.any(samples < 0):
        raise ValueError("fragmentation kernel takes negative values")
    raw = np.triu(samples, k=1)
    # Daughters in the upper half of the parent's own cell would land on the
    # parent node, which the strictly triangular operator forbids; their mass
    # is lumped onto the next node down so the raw columns stay accurate.
    top_share = xi[1:] * _upper_cell_weight(size) * np.diag(samples)[1:]
    idx = np.arange(1, m)
    raw[idx - 1, idx] += top_share / (xi[:-1] * w[:-1])
    under = np.empty(m)
    under[0] = xi[0]
    for j in range(1, m):
        eta = xi[j]
        below = kernel_partial_moment(kernel, eta, xi[0], lambda x: x)
        under[j] = min(max(below, 0.0), eta)
    resolved = (xi * w) @ raw
    target = xi - under
    scale = np.ones(m)
    for j in range(1, m):
        if target[j] <= 0:
            raw[:, j] = 0.0
            under[j] = xi[j]
            continue
        if resolved[j] <= 0:
            if env[j] > 0:
                raise ValueError("kernel unresolvable on grid")
            continue
        scale[j] = target[j] / resolved[j]
    gain = raw * scale[None, :]
    # exact identity: recompute the ledger share from the rescaled columns
    under[1:] = xi[1:] - (xi * w) @ gain[:, 1:]
    return FragOperator(size, gain, under, beta, scale)


def _upper_cell_weight(size: SizeGrid) -> np.ndarray:
    """Right-endpoint share of each cell ``[xi_i, xi_{i+1}]`` in the size weights."""
    h = size.log_step
    return size.nodes[:-1] * (np.exp(h) - np.expm1(h) / h)
