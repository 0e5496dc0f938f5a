"""Initial data: a spatial profile times a size profile."""
from __future__ import annotations

from typing import Any

import numpy as np

from .grids import Field, SizeGrid, SpaceGrid

SIZE_PROFILES = ("exponential", "monodisperse", "lognormal", "zero")
SPACE_PROFILES = ("uniform", "cosine", "gaussian", "random")


def size_profile(size: SizeGrid, kind: str = "exponential", number: float = 1.0, scale: float = 1.0,
                 width: float = 0.5) -> np.ndarray:
    """Node values with discrete number ``sum_i w_i f_i`` equal to ``number``.

    ``exponential``: ``exp(-xi / scale)``; ``lognormal``: Gaussian in
    ``log(xi / scale)`` of standard deviation ``width``; ``monodisperse``: a
    single node nearest to ``scale``; ``zero``: identically zero.
    """
    xi = size.nodes
    if kind == "zero":
        return np.zeros(size.count)
    if kind == "exponential":
        f = np.exp(-xi / scale)
    elif kind == "lognormal":
        f = np.exp(-0.5 * (np.log(xi / scale) / width) ** 2)
    elif kind == "monodisperse":
        f = np.zeros(size.count)
        f[int(np.argmin(np.abs(np.log(xi / scale))))] = 1.0
    else:
        raise ValueError(f"unknown size profile {kind!r}; choose from {SIZE_PROFILES}")
    total = float(f @ size.weights)
    if total <= 0:
        raise ValueError("size profile vanishes on the grid")
    return f * (number / total)


def space_profile(space: SpaceGrid, kind: str = "uniform", amplitude: float = 0.5, mode: int = 1,
                  width: float = 0.1, seed: int = 0) -> np.ndarray:
    """Positive spatial factor with unit mean.

    ``cosine``: ``1 + amplitude * prod cos(2 pi mode x / L)``; ``gaussian``:
    ``1 - amplitude`` background plus a periodic bump of relative width
    ``width`` at the box centre; ``random``: a few seeded low Fourier modes.
    """
    L = space.extent
    coords = space.coordinates()
    if kind == "uniform":
        g = np.ones(space.shape)
    elif kind == "cosine":
        if not 0 <= amplitude < 1:
            raise ValueError("cosine amplitude must lie in [0, 1)")
        g = np.ones(space.shape)
        prod = np.ones(space.shape)
        for x in coords:
            prod = prod * np.cos(2 * np.pi * mode * x / L)
        g = g + amplitude * prod
    elif kind == "gaussian":
        if not 0 <= amplitude < 1:
            raise ValueError("gaussian amplitude must lie in [0, 1)")
        r = space.torus_distance(tuple(0.5 * L for _ in range(space.dim)))
        bump = np.exp(-0.5 * (r / (width * L)) ** 2)
        bump = bump / bump.mean()
        g = (1.0 - amplitude) + amplitude * bump
    elif kind == "random":
        rng = np.random.default_rng(seed)
        g = np.ones(space.shape)
        for _ in range(4):
            phase = rng.uniform(0, 2 * np.pi, size=space.dim)
            k = rng.integers(1, 4, size=space.dim)
            term = np.ones(space.shape)
            for x, kk, ph in zip(coords, k, phase):
                term = term * np.cos(2 * np.pi * kk * x / L + ph)
            g = g + (amplitude / 4.0) * term
    else:
        raise ValueError(f"unknown space profile {kind!r}; choose from {SPACE_PROFILES}")
    return g / g.mean()


def initial_field(space: SpaceGrid, size: SizeGrid, params: dict[str, Any] | None = None, seed: int = 0) -> Field:
    """Separable initial field from a parameter mapping (the ``initial_condition`` config section)."""
    params = dict(params or {})
    sp = size_profile(size, params.get("size_profile", "exponential"), params.get("number", 1.0),
                      params.get("scale", 1.0), params.get("width", 0.5))
    gp = space_profile(space, params.get("space_profile", "uniform"), params.get("amplitude", 0.5),
                       int(params.get("mode", 1)), params.get("bump_width", 0.1), seed)
    return Field(gp[..., None] * sp, space, size)
