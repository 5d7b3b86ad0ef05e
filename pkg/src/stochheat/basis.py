"""Dirichlet eigenstructure of the Laplacian on the unit cube.

The heat kernel on ``[0, 1]^d`` with zero boundary values factorises over
the axes, so every d-dimensional quantity here is a product of the
corresponding one-dimensional sums

    G_t(x, y) = sum_k exp(-pi^2 |k|^2 t) e_k(x) e_k(y),
    e_k(x) = 2^{d/2} prod_i sin(pi k_i x_i).

Summing each axis separately is the same finite sum over the tensor
product of mode indices, just reorganised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

SUPPORTED_DIMS = (1, 2)
IMAGE_CUTOFF = 0.05


def _as_point(x, d: int | None = None) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.ndim != 1:
        raise ValueError("point must be a flat coordinate vector")
    if d is not None and pt.size != d:
        raise ValueError(f"point has {pt.size} coordinates, expected {d}")
    if pt.size not in SUPPORTED_DIMS:
        raise ValueError(f"dimension {pt.size} not supported (d must be 1 or 2)")
    if np.any(pt < 0.0) or np.any(pt > 1.0):
        raise ValueError(f"point {pt.tolist()} lies outside [0, 1]^{pt.size}")
    return pt


def _check_time(t: float) -> float:
    t = float(t)
    if not t > 0.0:
        raise ValueError(f"time must be positive, got {t} (G_0 is a distribution)")
    return t


def default_cutoff(t: float, tol: float = 1e-16) -> int:
    """Smallest per-axis cutoff N with exp(-pi^2 N^2 t) below ``tol``."""
    t = _check_time(t)
    return max(1, math.ceil(math.sqrt(-math.log(tol) / (math.pi**2 * t))))


def eigenvalue(k) -> float:
    k = np.atleast_1d(np.asarray(k, dtype=int))
    return float(math.pi**2 * np.sum(k.astype(float) ** 2))


def eigenfunction(k, x) -> float:
    """Normalised Dirichlet sine mode ``e_k`` evaluated at ``x``."""
    k = np.atleast_1d(np.asarray(k))
    if not np.issubdtype(k.dtype, np.integer) or np.any(k < 1):
        raise ValueError(f"mode index {k.tolist()} must have positive integer components")
    pt = _as_point(x, k.size)
    return float(np.prod(math.sqrt(2.0) * np.sin(math.pi * k * pt)))


def sine_modes(n_modes: int, x) -> np.ndarray:
    """Table ``sqrt(2) sin(pi k x)`` for k = 1..n_modes, shape (..., n_modes)."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, n_modes + 1, dtype=float)
    return math.sqrt(2.0) * np.sin(math.pi * x[..., None] * k)


def _axis_weights(t: float, n_modes: int, power: int = 1) -> np.ndarray:
    k = np.arange(1, n_modes + 1, dtype=float)
    return np.exp(-power * math.pi**2 * k**2 * t)


def green_1d(t: float, x, y, cutoff: int) -> np.ndarray:
    w = _axis_weights(t, cutoff)
    # symmetric product first so swapping x and y is bit-exact
    return np.sum(w * (sine_modes(cutoff, x) * sine_modes(cutoff, y)), axis=-1)


def green_eval(t: float, x, y, cutoff: int | None = None) -> float:
    """Truncated eigen-expansion of the Dirichlet heat kernel."""
    t = _check_time(t)
    xp = _as_point(x)
    yp = _as_point(y, xp.size)
    n = default_cutoff(t) if cutoff is None else int(cutoff)
    if n < 1:
        raise ValueError("cutoff must be at least 1")
    return float(np.prod([green_1d(t, xi, yi, n) for xi, yi in zip(xp, yp)]))


def gauss_kernel(t: float, z) -> float:
    """Free-space heat kernel (4 pi t)^{-d/2} exp(-|z|^2 / 4t)."""
    t = _check_time(t)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = z.size
    return float((4 * math.pi * t) ** (-d / 2) * math.exp(-np.dot(z, z) / (4 * t)))


def _mass_deficit_images(t: float, x: float) -> float:
    """1 - int G_t(x, y) dy from the image expansion, every term an erfc tail."""
    s = math.sqrt(2 * t)
    h = 1.0 / s
    half_erfc = lambda z: 0.5 * special.erfc(z / math.sqrt(2))  # noqa: E731
    a = x / s
    out = 2 * half_erfc(a) + half_erfc(h - a) - half_erfc(a + h)
    reach = int(math.ceil(10 * s)) + 2
    for n in range(1, reach + 1):
        ap, an = (x + 2 * n) / s, -(x - 2 * n) / s
        # the image at +2n adds mass and the one at -2n removes it
        out -= half_erfc(ap - h) + half_erfc(ap + h) - 2 * half_erfc(ap)
        out += half_erfc(an - h) + half_erfc(an + h) - 2 * half_erfc(an)
    return out


def _mass_1d(t: float, x: float, tol: float = 1e-17) -> float:
    if t < IMAGE_CUTOFF:
        # the sine series sums ~1/sqrt(t) terms to a value near 1 and can round above it
        return 1.0 - _mass_deficit_images(t, x)
    n = default_cutoff(t, tol)
    k = np.arange(1, n + 1, 2, dtype=float)
    terms = 4.0 / (math.pi * k) * np.exp(-math.pi**2 * k**2 * t) * np.sin(math.pi * k * x)
    return float(np.sum(terms[::-1]))


def green_mass(t: float, x) -> float:
    """``int G_t(x, y) dy`` from the closed-form integrals of the odd modes."""
    t = _check_time(t)
    xp = _as_point(x)
    return float(np.prod([_mass_1d(t, xi) for xi in xp]))


def green_mass_deficit(t: float, x) -> float:
    """``1 - int G_t(x, y) dy``, with full relative accuracy when the mass is near 1."""
    t = _check_time(t)
    xp = _as_point(x)
    if t < IMAGE_CUTOFF:
        gaps = [_mass_deficit_images(t, xi) for xi in xp]
    else:
        gaps = [1.0 - _mass_1d(t, xi) for xi in xp]
    with np.errstate(divide="ignore"):
        return float(-np.expm1(np.sum(np.log1p(-np.asarray(gaps)))))


def _l2_1d(t: float, x: float) -> float:
    n = default_cutoff(2 * t, 1e-17)
    return float(np.sum((_axis_weights(t, n, 2) * sine_modes(n, x) ** 2)[::-1]))


def green_l2(t: float, x) -> float:
    """``int G_t(x, y)^2 dy`` via Parseval over the sine basis."""
    t = _check_time(t)
    xp = _as_point(x)
    return float(np.prod([_l2_1d(t, xi) for xi in xp]))


def green_l2_bound(t: float, d: int) -> float:
    return (4 * math.pi * t) ** (-d / 2)


def semigroup_residual(t: float, s: float, x, y, quad_points: int = 256,
                       cutoff: int = 64) -> float:
    """|int G_t(x, z) G_s(z, y) dz - G_{t+s}(x, y)| with trapezoid quadrature in z.

    The trapezoid rule with ``quad_points`` panels integrates products of
    sine modes exactly while the combined frequency stays below
    ``2 * quad_points``, so the residual isolates kernel truncation.
    """
    t = _check_time(t)
    s = _check_time(s)
    xp = _as_point(x)
    yp = _as_point(y, xp.size)
    z = np.linspace(0.0, 1.0, quad_points + 1)
    wts = np.full(z.size, 1.0 / quad_points)
    wts[[0, -1]] *= 0.5
    composed = 1.0
    for xi, yi in zip(xp, yp):
        left = green_1d(t, xi, z, cutoff)
        right = green_1d(s, z, yi, cutoff)
        composed *= float(np.dot(wts, left * right))
    return abs(composed - green_eval(t + s, xp, yp, cutoff))


@dataclass(frozen=True)
class GreenEvaluator:
    """Mode table for a fixed dimension and per-axis cutoff."""

    dimension: int
    mode_cutoff: int
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension not in SUPPORTED_DIMS:
            raise ValueError(f"dimension {self.dimension} not supported")
        if self.mode_cutoff < 1:
            raise ValueError("mode_cutoff must be at least 1")
        k = np.arange(1, self.mode_cutoff + 1, dtype=float)
        lam = math.pi**2 * k**2
        if self.dimension == 2:
            lam = lam[:, None] + lam[None, :]
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    def mode_values(self, x) -> np.ndarray:
        """Values e_k(x) for all retained k, shaped like ``eigenvalues``."""
        xp = _as_point(x, self.dimension)
        tables = [sine_modes(self.mode_cutoff, xi) for xi in xp]
        if self.dimension == 1:
            return tables[0]
        return np.multiply.outer(tables[0], tables[1])

    def kernel_coefficients(self, t: float, x) -> np.ndarray:
        """Sine coefficients of y -> G_t(x, y)."""
        t = _check_time(t)
        return np.exp(-self.eigenvalues * t) * self.mode_values(x)

    def __call__(self, t: float, x, y) -> float:
        t = _check_time(t)
        return float(np.sum(self.kernel_coefficients(t, x) * self.mode_values(y)))
