"""Brute-force reference computations for the test suite.

Nothing here imports the production operators: the size-only ODE uses its own
cell-integrated fragmentation matrix and direct double sums for coagulation
with nearest-mass rebinning, and the heat flow is a direct periodic-image
Gaussian summation.  Agreement with the production code is therefore evidence
rather than a tautology.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grids import SizeGrid, SpaceGrid
from .kernels import CoagKernel, FragKernel, RateModel

logger = logging.getLogger(__name__)

IMAGES = 2  # images on each side, five in total per axis


# --------------------------------------------------------------------------
# size-only ODE


@dataclass
class OracleTrajectory:
    """Scalars at every step and the state at ``T``.

    ``overflow_mass`` and ``overflow_number`` accumulate what left through
    the top of the size grid.
    """

    times: np.ndarray
    number: np.ndarray
    mass: np.ndarray
    overflow_mass: np.ndarray
    overflow_number: np.ndarray
    final: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


def _cell_edges(nodes: np.ndarray) -> np.ndarray:
    """Geometric midpoints, with the first edge moved to zero so that
    fragments below the grid are kept on the smallest node."""
    mid = np.sqrt(nodes[:-1] * nodes[1:])
    return np.concatenate(([0.0], mid, [np.inf]))


def _gauss_legendre(a: float, b: float, fn, order: int = 24) -> float:
    x, w = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (b - a) * x + 0.5 * (b + a)
    return float(0.5 * (b - a) * np.sum(w * fn(xs)))


def fragmentation_matrix(kernel: FragKernel, size: SizeGrid, order: int = 24) -> np.ndarray:
    """``F[i, j]``: fragments per unit time deposited at node ``i`` from a unit
    density at parent node ``j`` (before the factor ``beta_j``), divided by
    ``w_i``.

    The daughter mass falling in the cell of node ``i`` (clipped at the parent
    size) is integrated by Gauss-Legendre and carried as number
    ``mass / xi_i``; each column is then normalised so the parent mass is
    returned exactly.
    """
    xi, w = size.nodes, size.weights
    m = size.count
    edges = _cell_edges(xi)
    F = np.zeros((m, m))
    for j in range(m):
        eta = xi[j]

        def dens(s, eta=eta):
            return s * np.asarray(kernel(s, np.full_like(s, eta)), dtype=float)

        masses = np.zeros(m)
        for i in range(j + 1):
            a, b = edges[i], min(edges[i + 1], eta)
            if b > a:
                if a == 0.0:
                    # graded sub-panels resolve integrable singularities at zero
                    cuts = b * np.geomspace(1e-12, 1.0, 25)
                    masses[i] = _gauss_legendre(0.0, cuts[0], dens, order) + sum(
                        _gauss_legendre(lo, hi, dens, order) for lo, hi in zip(cuts[:-1], cuts[1:]))
                else:
                    masses[i] = _gauss_legendre(a, b, dens, order)
        total = masses.sum()
        if total > 0:
            masses *= eta / total
        F[:, j] = masses / (xi * w) * w[j]
    return F


def _nearest_mass_targets(size: SizeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Node nearest in mass to ``xi_i + xi_j`` (``-1`` beyond the last cell) and the merged masses."""
    xi = size.nodes
    v = xi[:, None] + xi[None, :]
    upper = xi[-1] * np.sqrt(size.ratio)
    idx = np.abs(v[..., None] - xi[None, None, :]).argmin(axis=-1)
    idx[v > upper] = -1
    return idx, v


def homogeneous_rhs(rates: RateModel, frag: FragKernel | None, coag: CoagKernel | None, size: SizeGrid):
    """Right-hand side ``u -> (du/dt, overflow number rate, overflow mass rate)``
    of the size-only system, built by brute force."""
    xi, w = size.nodes, size.weights
    beta = np.asarray(rates.beta_envelope(xi), dtype=float)
    F = fragmentation_matrix(frag, size) if frag is not None else None
    if coag is not None:
        K = np.asarray(coag(xi[:, None], xi[None, :]), dtype=float) * np.ones((size.count, size.count))
        target, merged = _nearest_mass_targets(size)
        inside = target >= 0
        tgt = target[inside]
        v_out = merged[~inside]

    def rhs(u: np.ndarray) -> tuple[np.ndarray, float, float]:
        du = np.zeros_like(u)
        over_n = over_m = 0.0
        if F is not None:
            bu = beta * u
            du += F @ bu - bu
        if coag is not None:
            uw = u * w
            R = 0.5 * K * np.outer(uw, uw)  # collisions per unit volume, ordered pairs halved
            du -= (K @ uw) * u
            gain = np.bincount(tgt, weights=R[inside], minlength=size.count)
            du += gain / w
            over_n = float(R[~inside].sum())
            over_m = float(np.sum(R[~inside] * v_out))
        return du, over_n, over_m

    return rhs


def ode_oracle(models, u0_profile: np.ndarray, T: float, steps: int = 10_000,
               snapshot_every: int = 0) -> OracleTrajectory:
    """Classic four-stage Runge-Kutta for the spatially homogeneous system.

    Parameters
    ----------
    models
        Anything with ``size``, ``rates``, ``frag`` and ``coag`` attributes.
    u0_profile
        Size profile at the nodes.
    T, steps
        Horizon and number of equal steps.
    snapshot_every
        Store the state every so many steps (0 keeps only the final state).
    """
    size = models.size
    rhs = homogeneous_rhs(models.rates, models.frag, models.coag, size)
    xi, w = size.nodes, size.weights
    u = np.array(u0_profile, dtype=float)
    dt = T / steps
    times = np.linspace(0.0, T, steps + 1)
    number = np.empty(steps + 1)
    mass = np.empty(steps + 1)
    on = np.zeros(steps + 1)
    om = np.zeros(steps + 1)
    number[0], mass[0] = u @ w, u @ (xi * w)
    snaps = {0: u.copy()} if snapshot_every else {}
    for k in range(1, steps + 1):
        k1, n1, m1 = rhs(u)
        k2, n2, m2 = rhs(u + 0.5 * dt * k1)
        k3, n3, m3 = rhs(u + 0.5 * dt * k2)
        k4, n4, m4 = rhs(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        on[k] = on[k - 1] + dt / 6.0 * (n1 + 2 * n2 + 2 * n3 + n4)
        om[k] = om[k - 1] + dt / 6.0 * (m1 + 2 * m2 + 2 * m3 + m4)
        number[k], mass[k] = u @ w, u @ (xi * w)
        if snapshot_every and k % snapshot_every == 0:
            snaps[k] = u.copy()
    return OracleTrajectory(times, number, mass, om, on, u, snaps)


# --------------------------------------------------------------------------
# heat flow


def periodic_gaussian_matrix(alpha_t: float, space: SpaceGrid, images: int = IMAGES) -> np.ndarray:
    """``K[i, j] = h * sum_k g(x_i - x_j + k L)`` for the one-dimensional heat kernel ``g``."""
    x = space.axis()
    L = space.extent
    diff = x[:, None] - x[None, :]
    acc = np.zeros_like(diff)
    for k in range(-images, images + 1):
        acc += np.exp(-((diff + k * L) ** 2) / (4.0 * alpha_t))
    return acc * space.spacing / np.sqrt(4.0 * np.pi * alpha_t)


def convolution_oracle(profile: np.ndarray, alpha: float, t: float, space: SpaceGrid) -> np.ndarray:
    """Heat flow by direct summation against the periodised Gaussian.

    The Gaussian factorises over axes, so each axis is a dense ``n x n``
    product; cost is ``O(d n^(d+1))``.  Requires ``sqrt(4 alpha t) <= L / 8``
    so that five images capture the kernel to round-off.
    """
    if alpha * t <= 0:
        return np.array(profile, dtype=float, copy=True)
    if np.sqrt(4.0 * alpha * t) > space.extent / 8.0:
        raise ValueError("convolution oracle needs sqrt(4 alpha t) <= L/8")
    K = periodic_gaussian_matrix(alpha * t, space)
    out = np.asarray(profile, dtype=float)
    for ax in range(space.dim):
        out = np.moveaxis(np.tensordot(K, out, axes=([1], [ax])), 0, ax)
    return out
