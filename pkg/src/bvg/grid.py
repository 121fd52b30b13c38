"""Discrete images on uniform grids, with the difference operators and norms
used throughout the package.

An :class:`Image` is a float64 array of pixel values plus the physical grid
metadata (pixel spacing and the coordinates of the first pixel center).  The
difference stencils themselves are dimensionless; the spacing enters only
through the norms, so ``tv_norm`` scales like a length and ``l2_norm_sq``
like an area.

The gradient uses forward differences with replicate (zero last difference)
boundary handling, and the divergence is its exact negative adjoint:

>>> import numpy as np
>>> from bvg.grid import Image, gradient, divergence, l2_inner
>>> rng = np.random.default_rng(0)
>>> u = Image(rng.normal(size=(7, 5)))
>>> g = gradient(u)
>>> lhs = np.sum(g.g1 * g.g1) + np.sum(g.g2 * g.g2)
>>> rhs = -l2_inner(u, divergence(g))
>>> bool(abs(lhs - rhs) < 1e-12 * abs(lhs))
True
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridError",
    "GridMismatchError",
    "NonFiniteValueError",
    "Image",
    "DualField",
    "gradient",
    "divergence",
    "tv_norm",
    "l1_norm",
    "l2_norm",
    "l2_norm_sq",
    "l2_inner",
    "sup_norm",
    "mean_value",
    "pixel_coords",
]


class GridError(ValueError):
    """Base class for grid consistency problems."""


class GridMismatchError(GridError):
    """Two operands live on different grids (shape, spacing or origin)."""


class NonFiniteValueError(GridError):
    """An array contains NaN or infinite entries."""


def _as_values(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise GridError(f"{name} must be a 2-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValueError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class Image:
    """A scalar field sampled at pixel centers.

    Parameters
    ----------
    values : array_like
        Pixel values, shape (height, width), converted to float64.  Row
        index runs along y, column index along x.
    spacing : float
        Physical side length of one pixel.  Pixels are square.
    origin : tuple of float
        Physical (x, y) coordinates of the center of pixel (0, 0).
    """

    values: np.ndarray
    spacing: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.values, "values"))
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise GridError(f"spacing must be positive, got {self.spacing}")
        x0, y0 = self.origin
        if not (np.isfinite(x0) and np.isfinite(y0)):
            raise GridError("origin must be finite")
        object.__setattr__(self, "origin", (float(x0), float(y0)))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def like(self, values) -> "Image":
        """New image with the same grid metadata and different values."""
        return Image(values, self.spacing, self.origin)


@dataclass(frozen=True)
class DualField:
    """A pair of component arrays (g1 along x, g2 along y) on an image grid."""

    g1: np.ndarray
    g2: np.ndarray
    spacing: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "g1", _as_values(self.g1, "g1"))
        object.__setattr__(self, "g2", _as_values(self.g2, "g2"))
        if self.g1.shape != self.g2.shape:
            raise GridMismatchError(
                f"component shapes differ: {self.g1.shape} vs {self.g2.shape}"
            )
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise GridError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.g1, self.g2)


def require_same_grid(a, b) -> None:
    """Raise GridMismatchError unless a and b share shape, spacing and origin."""
    sa = a.values.shape if isinstance(a, Image) else a.g1.shape
    sb = b.values.shape if isinstance(b, Image) else b.g1.shape
    if sa != sb:
        raise GridMismatchError(f"shapes differ: {sa} vs {sb}")
    if abs(a.spacing - b.spacing) > 1e-12 * max(a.spacing, b.spacing):
        raise GridMismatchError(f"spacings differ: {a.spacing} vs {b.spacing}")
    if any(abs(p - q) > 1e-9 * (1.0 + abs(p)) for p, q in zip(a.origin, b.origin)):
        raise GridMismatchError(f"origins differ: {a.origin} vs {b.origin}")


def grad_arrays(
    a: np.ndarray,
    out1: np.ndarray | None = None,
    out2: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences of a raw array; last column/row of each component is 0."""
    g1 = np.zeros_like(a) if out1 is None else out1
    g2 = np.zeros_like(a) if out2 is None else out2
    np.subtract(a[:, 1:], a[:, :-1], out=g1[:, :-1])
    np.subtract(a[1:, :], a[:-1, :], out=g2[:-1, :])
    if out1 is not None:
        g1[:, -1] = 0.0
        g2[-1, :] = 0.0
    return g1, g2


def div_arrays(g1: np.ndarray, g2: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Backward-difference divergence of raw component arrays.

    This is the exact negative adjoint of :func:`grad_arrays` under the
    unweighted Euclidean pairing, so its output always sums to zero.
    """
    if out is None:
        out = np.empty_like(g1)
    # along x
    out[:, 0] = g1[:, 0]
    if g1.shape[1] > 1:
        out[:, 1:-1] = g1[:, 1:-1] - g1[:, :-2]
        out[:, -1] = -g1[:, -2]
    else:
        out[:, 0] = 0.0
    # along y
    if g2.shape[0] > 1:
        out[0, :] += g2[0, :]
        out[1:-1, :] += g2[1:-1, :] - g2[:-2, :]
        out[-1, :] += -g2[-2, :]
    return out


def gradient(image: Image) -> DualField:
    """Forward-difference gradient of an image, in pixel units.

    The stencil is dimensionless: component values are plain differences of
    neighboring pixels.  Divide by ``image.spacing`` to get a physical
    derivative.  The last column of g1 and the last row of g2 are zero
    (replicate boundary).
    """
    g1, g2 = grad_arrays(image.values)
    return DualField(g1, g2, image.spacing, image.origin)


def divergence(field: DualField) -> Image:
    """Backward-difference divergence, the exact negative adjoint of gradient."""
    return Image(div_arrays(field.g1, field.g2), field.spacing, field.origin)


def tv_norm(image: Image) -> float:
    """Total variation: sum of pointwise gradient magnitudes times spacing.

    For an axis-aligned step of height A this equals A times the physical
    edge length exactly; curved boundaries are overestimated by the stencil
    anisotropy (about 7 to 16 percent for a disk, depending on how the
    boundary pixels are graded).
    """
    g1, g2 = grad_arrays(image.values)
    return float(np.sum(np.hypot(g1, g2)) * image.spacing)


def l1_norm(image: Image) -> float:
    """Integral of |values|, pixel area weighted."""
    return float(np.sum(np.abs(image.values)) * image.spacing**2)


def l2_norm_sq(image: Image) -> float:
    """Integral of values squared, pixel area weighted."""
    return float(np.sum(image.values**2) * image.spacing**2)


def l2_norm(image: Image) -> float:
    return float(np.sqrt(l2_norm_sq(image)))


def l2_inner(a: Image, b: Image) -> float:
    """Area-weighted inner product of two images on the same grid."""
    require_same_grid(a, b)
    return float(np.sum(a.values * b.values) * a.spacing**2)


def sup_norm(image: Image) -> float:
    return float(np.max(np.abs(image.values)))


def mean_value(image: Image) -> float:
    """Plain average of the pixel values."""
    return float(np.mean(image.values))


def pixel_coords(image: Image) -> tuple[np.ndarray, np.ndarray]:
    """Physical (X, Y) meshgrids of the pixel centers, each shaped like values."""
    x0, y0 = image.origin
    h = image.spacing
    x = x0 + h * np.arange(image.width)
    y = y0 + h * np.arange(image.height)
    return np.meshgrid(x, y)
