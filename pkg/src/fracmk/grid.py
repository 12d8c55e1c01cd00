"""Periodic computational box, discrete fields, masks, quadrature and norms.

The continuum problem lives on all of R^d with fields supported in a bounded
domain Omega.  Numerically everything is sampled on a uniform lattice over a
periodic box (-L/2, L/2)^d that contains Omega and a buffer region Omega_R
with margin, so that what leaks past the box edge is below solver tolerance.
All quadrature is the equal-weight h^d rule, which on a periodic lattice is
the trapezoidal rule and matches spectral differentiation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class OmegaShape:
    """Centered domain Omega: an interval/rectangle (via halfwidths) or a ball."""

    kind: str  # "interval" | "rectangle" | "ball"
    halfwidths: tuple[float, ...] = ()
    radius: float = 0.0

    def __post_init__(self):
        if self.kind in ("interval", "rectangle"):
            if not self.halfwidths or any(a <= 0 for a in self.halfwidths):
                raise ValueError("box-like Omega needs positive halfwidths")
        elif self.kind == "ball":
            if self.radius <= 0:
                raise ValueError("ball Omega needs positive radius")
        else:
            raise ValueError(f"unknown Omega kind {self.kind!r}")

    def outer_radius(self) -> float:
        if self.kind == "ball":
            return self.radius
        return float(np.linalg.norm(self.halfwidths))

    def diameter(self) -> float:
        return 2.0 * self.outer_radius()

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of strict membership; points has shape (d, ...)."""
        if self.kind == "ball":
            return np.sqrt(np.sum(points**2, axis=0)) < self.radius
        inside = np.ones(points.shape[1:], dtype=bool)
        for j, a in enumerate(self.halfwidths):
            inside &= np.abs(points[j]) < a
        return inside

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance to Omega (0 inside), shape (d, ...) -> (...)."""
        if self.kind == "ball":
            return np.maximum(np.sqrt(np.sum(points**2, axis=0)) - self.radius, 0.0)
        gaps = [np.maximum(np.abs(points[j]) - a, 0.0) for j, a in enumerate(self.halfwidths)]
        return np.sqrt(sum(g**2 for g in gaps))


def interval(halfwidth: float) -> OmegaShape:
    return OmegaShape("interval", halfwidths=(float(halfwidth),))


def rectangle(*halfwidths: float) -> OmegaShape:
    return OmegaShape("rectangle", halfwidths=tuple(float(a) for a in halfwidths))


def ball(radius: float) -> OmegaShape:
    return OmegaShape("ball", radius=float(radius))


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice of n^d nodes on the box (-L/2, L/2)^d.

    Nodes sit at x_i = -L/2 + i*h per axis, h = L/n.  Omega and its buffer
    Omega_R must fit strictly inside the box with margin >= 2h per side.
    """

    dim: int
    box_side: float
    points_per_axis: int
    omega: OmegaShape
    buffer: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        n = self.points_per_axis
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("points_per_axis must be a power of two, >= 16")
        if self.box_side <= 0 or self.buffer <= 0:
            raise ValueError("box_side and buffer must be positive")
        margin = self.box_side / 2 - (self.omega.outer_radius() + self.buffer)
        if margin < 2 * self.spacing:
            raise ValueError(
                f"Omega_R must fit in the box with margin >= 2h (margin={margin:g})"
            )

    @property
    def spacing(self) -> float:
        return self.box_side / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    def axis(self) -> np.ndarray:
        n, L = self.points_per_axis, self.box_side
        return -L / 2 + self.spacing * np.arange(n)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (dim, n, ...)."""
        ax = self.axis()
        if self.dim == 1:
            return ax[None, :]
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X, Y])

    def omega_distance(self) -> np.ndarray:
        return self.omega.distance(self.coords())

    def masks(self) -> "DomainMask":
        pts = self.coords()
        inside = self.omega.contains(pts)
        buffer_inside = self.omega.distance(pts) < self.buffer
        return DomainMask(inside=inside, buffer_inside=buffer_inside)


@dataclass(frozen=True)
class DomainMask:
    """Boolean lattices marking Omega and the buffered Omega_R."""

    inside: np.ndarray
    buffer_inside: np.ndarray

    def __post_init__(self):
        if not self.inside.any() or not self.buffer_inside.any():
            raise ValueError("masks must be nonempty")
        if (self.inside & ~self.buffer_inside).any():
            raise ValueError("inside must be contained in buffer_inside")
        self.inside.flags.writeable = False
        self.buffer_inside.flags.writeable = False


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ScalarField:
    """Real scalar lattice field; immutable after construction."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class VectorField:
    """d-component lattice field, stored as one array of shape (d, n, ...)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape != (self.grid.dim,) + self.grid.shape:
            raise ValueError("vector values must have shape (dim,) + grid shape")
        if not np.isfinite(v).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))


def extend_by_zero(values: np.ndarray, grid: GridSpec, mask: np.ndarray | None = None) -> ScalarField:
    """Extend data given on the Omega nodes by zero to the whole box.

    `values` is either a full lattice array (checked to vanish off the mask)
    or a flat vector of length mask.sum() holding the Omega-node values.
    """
    if mask is None:
        mask = grid.masks().inside
    out = np.zeros(grid.shape)
    flat = np.asarray(values, dtype=float)
    if flat.shape == grid.shape:
        if np.any(flat[~mask] != 0.0):
            raise ValueError("input carries nonzero values outside the mask")
        out[mask] = flat[mask]
    elif flat.ndim == 1 and flat.size == int(mask.sum()):
        out[mask] = flat
    else:
        raise ValueError("values must match the grid or the mask node count")
    return ScalarField(grid, out)


def lp_norm(f: ScalarField | VectorField, p: float, region: np.ndarray | None = None) -> float:
    """L^p norm by h^d quadrature; p=inf is the sup over region nodes.

    Vector fields are reduced to their pointwise Euclidean magnitude first.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    mag = f.magnitude() if isinstance(f, VectorField) else np.abs(f.values)
    if region is not None:
        mag = mag[region]
    if np.isinf(p):
        if mag.size == 0:
            raise ValueError("sup norm over an empty region")
        return float(np.max(mag))
    if mag.size == 0:
        return 0.0
    return float((f.grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def holder_seminorm(f: ScalarField, beta: float, region: np.ndarray) -> float:
    """Discrete C^{0,beta} seminorm: sup over node pairs of |f(x)-f(y)|/|x-y|^beta.

    Exhaustive over the region's nodes, O(N^2); meant for modest masks.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    pts = f.grid.coords()[:, region]  # (d, N)
    vals = f.values[region]
    if vals.size < 2:
        return 0.0
    diff = np.abs(vals[:, None] - vals[None, :])
    dist = np.sqrt(np.sum((pts[:, :, None] - pts[:, None, :]) ** 2, axis=0))
    iu = np.triu_indices(vals.size, k=1)
    return float(np.max(diff[iu] / dist[iu] ** beta))


def bump(grid: GridSpec, radius: float | None = None, center: tuple[float, ...] | None = None) -> ScalarField:
    """Smooth bump exp(1 - 1/(1 - r^2)) supported in the ball of given radius.

    Defaults to a bump filling Omega (radius = inner radius of Omega).  The
    profile is C^infinity with compact support, so it is exactly zero on the
    lattice outside the ball.
    """
    if radius is None:
        if grid.omega.kind == "ball":
            radius = grid.omega.radius
        else:
            radius = min(grid.omega.halfwidths)
    pts = grid.coords()
    if center is not None:
        pts = pts - np.asarray(center, dtype=float).reshape((grid.dim,) + (1,) * grid.dim)
    r2 = np.sum(pts**2, axis=0) / radius**2
    out = np.zeros(grid.shape)
    core = r2 < 1.0
    out[core] = np.exp(1.0 - 1.0 / (1.0 - r2[core]))
    return ScalarField(grid, out)


def random_bumps(grid: GridSpec, count: int, seed: int = 0, modes: int = 4) -> list[ScalarField]:
    """Ensemble of random smooth fields compactly supported in Omega.

    Low-frequency random cosine profiles windowed by the Omega bump; used to
    estimate embedding constants and as test fields.
    """
    rng = np.random.default_rng(seed)
    window = bump(grid).values
    pts = grid.coords()
    L = grid.box_side
    fields = []
    for _ in range(count):
        profile = np.zeros(grid.shape)
        for _ in range(modes):
            kvec = rng.integers(-3, 4, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.normal()
            arg = 2 * np.pi / L * sum(kvec[j] * pts[j] for j in range(grid.dim))
            profile += amp * np.cos(arg + phase)
        fields.append(ScalarField(grid, window * profile))
    return fields


# -- serialization: raw binary + plain-text header, CSV slices ---------------


def write_field(f: ScalarField | VectorField, path_prefix: str | Path, s: float | None = None) -> None:
    """Dump a field as <prefix>.bin (float64, C order) + <prefix>.hdr text header."""
    prefix = Path(path_prefix)
    comps = 1 if isinstance(f, ScalarField) else f.grid.dim
    prefix.with_suffix(".bin").write_bytes(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    hdr = [
        f"dim={f.grid.dim}",
        f"n={f.grid.points_per_axis}",
        f"L={f.grid.box_side!r}",
        f"s={'none' if s is None else repr(float(s))}",
        f"components={comps}",
    ]
    prefix.with_suffix(".hdr").write_text("\n".join(hdr) + "\n")


def read_field(path_prefix: str | Path, grid: GridSpec) -> ScalarField | VectorField:
    prefix = Path(path_prefix)
    hdr = dict(
        line.split("=", 1)
        for line in prefix.with_suffix(".hdr").read_text().strip().splitlines()
    )
    if int(hdr["n"]) != grid.points_per_axis or int(hdr["dim"]) != grid.dim:
        raise ValueError("header does not match the supplied grid")
    raw = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    comps = int(hdr["components"])
    if comps == 1:
        return ScalarField(grid, raw.reshape(grid.shape))
    return VectorField(grid, raw.reshape((comps,) + grid.shape))


def slice_to_csv(f: ScalarField, path: str | Path, axis: int = 0, index: int | None = None) -> None:
    """Write a 1D slice (x, value) as CSV; 1D fields are written whole."""
    ax = f.grid.axis()
    if f.grid.dim == 1:
        line = f.values
    else:
        if index is None:
            index = f.grid.points_per_axis // 2
        line = f.values[index, :] if axis == 0 else f.values[:, index]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(ax, line):
            w.writerow([repr(float(x)), repr(float(v))])
