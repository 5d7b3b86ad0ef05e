"""Spatially coloured, temporally white Gaussian noise on the unit cube.

The noise is described by its spectral measure ``lam`` (the tempered
measure whose Fourier transform is the spatial covariance ``f``).  The
Hilbert space H carrying the noise has inner product

    <phi, psi>_H = int lam(dxi) F phi(xi) conj(F psi(xi)),
    F phi(xi) = int exp(-2 i pi xi . x) phi(x) dx,

and everything here is expressed in the Dirichlet sine basis: the
Gram matrix of the (zero-extended) sine modes under this inner product is
the covariance per unit time of the noise tested against each mode.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate, special

MeasureKind = Literal["riesz", "point_mass", "ball_uniform", "tabulated"]

_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi}


class QuadratureError(RuntimeError):
    """Raised when a quadrature routine fails to reach its tolerance."""


class GramError(ValueError):
    """Raised when a Gram matrix is not positive semidefinite within tolerance."""


def riesz_constant(kappa: float, d: int) -> float:
    """Normalisation c with F[|x|^-kappa](xi) = c |xi|^(kappa - d)."""
    return math.pi ** (kappa - d / 2) * math.gamma((d - kappa) / 2) / math.gamma(kappa / 2)


def riesz_spectral_density(kappa: float, d: int, xi) -> float:
    if d not in (1, 2):
        raise ValueError(f"dimension {d} not supported")
    if not 0.0 < kappa < min(2.0, d):
        raise ValueError(f"kappa must lie in (0, min(2, d)) = (0, {min(2, d)}), got {kappa}")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(xi, dtype=float))))
    if r == 0.0:
        raise ValueError("density is singular at xi = 0; integrate radially instead")
    return riesz_constant(kappa, d) * r ** (kappa - d)


@dataclass(frozen=True)
class SpectralMeasure:
    """Spectral measure of the spatial covariance plus its regularity index eta.

    ``kind`` selects one of
      riesz        density c |xi|^(kappa - d), covariance |x|^-kappa
      point_mass   unit mass at the origin, covariance identically 1
      ball_uniform unit density on the ball of the given radius
      tabulated    radial density given by ``table = (radii, values)``,
                   linearly interpolated and zero past the last radius
    """

    kind: MeasureKind
    dimension: int = 1
    eta: float = 0.0
    kappa: float | None = None
    radius: float | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        d = self.dimension
        if d not in (1, 2):
            raise ValueError(f"dimension {d} not supported")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.kind == "riesz":
            if self.kappa is None or not 0.0 < self.kappa < min(2.0, d):
                raise ValueError(
                    f"riesz measure needs kappa in (0, min(2, d)) = (0, {min(2, d)}), got {self.kappa}")
            if not 2 * self.eta > self.kappa:
                raise ValueError(
                    f"riesz measure needs 2*eta > kappa for K_eta < inf "
                    f"(eta={self.eta}, kappa={self.kappa})")
        elif self.kind == "ball_uniform":
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball_uniform measure needs a positive radius")
        elif self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated measure needs a (radii, values) table")
            radii, vals = (np.asarray(a, dtype=float) for a in self.table)
            if radii.shape != vals.shape or radii.size < 2:
                raise ValueError("table radii and values must match and have >= 2 entries")
            if radii[0] < 0 or np.any(np.diff(radii) <= 0):
                raise ValueError("table radii must be nonnegative and strictly increasing")
            if np.any(vals < 0):
                raise ValueError("spectral density must be nonnegative")
        elif self.kind != "point_mass":
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def riesz(cls, kappa: float, dimension: int = 1, eta: float | None = None):
        if eta is None:
            # any eta above kappa/2 works; pick the midpoint of (kappa/2, 1)
            eta = 0.5 * (kappa / 2 + 1.0)
        return cls("riesz", dimension, eta, kappa=kappa)

    @classmethod
    def point_mass(cls, dimension: int = 1, eta: float = 0.0):
        return cls("point_mass", dimension, eta)

    @classmethod
    def ball_uniform(cls, radius: float, dimension: int = 1, eta: float = 0.0):
        return cls("ball_uniform", dimension, eta, radius=radius)

    @classmethod
    def tabulated(cls, radii, values, dimension: int = 1, eta: float = 0.0):
        table = (tuple(float(r) for r in radii), tuple(float(v) for v in values))
        return cls("tabulated", dimension, eta, table=table)

    @property
    def is_atomic(self) -> bool:
        return self.kind == "point_mass"

    @property
    def support_radius(self) -> float:
        if self.kind == "ball_uniform":
            return float(self.radius)
        if self.kind == "tabulated":
            return float(self.table[0][-1])
        return math.inf

    def radial_density(self, rho) -> np.ndarray:
        """Density of lam with respect to Lebesgue measure, as a function of |xi|."""
        rho = np.asarray(rho, dtype=float)
        d = self.dimension
        if self.kind == "riesz":
            with np.errstate(divide="ignore"):
                return riesz_constant(self.kappa, d) * rho ** (self.kappa - d)
        if self.kind == "ball_uniform":
            return np.where(rho <= self.radius, 1.0, 0.0)
        if self.kind == "tabulated":
            radii, vals = self.table
            return np.interp(rho, radii, vals, left=vals[0], right=0.0)
        raise ValueError("point mass has no density")

    def covariance(self, r: float) -> float:
        """Spatial covariance f at distance r > 0."""
        d = self.dimension
        if self.kind == "point_mass":
            return 1.0
        if self.kind == "riesz":
            return r ** (-self.kappa)
        if self.kind == "ball_uniform":
            R = self.radius
            if d == 1:
                return 2 * R * float(np.sinc(2 * R * r))
            return R * special.j1(2 * math.pi * R * r) / r
        radii, vals = self.table
        k = 2 * math.pi * r
        if d == 1 and k * (radii[-1] - radii[0]) > 1e-2:
            # the density is piecewise linear, so each panel integrates by parts exactly
            xs = np.concatenate([[0.0], radii]) if radii[0] > 0 else np.asarray(radii, float)
            ys = np.concatenate([[vals[0]], vals]) if radii[0] > 0 else np.asarray(vals, float)
            slope = np.diff(ys) / np.diff(xs)
            sin_b, sin_a = np.sin(k * xs[1:]), np.sin(k * xs[:-1])
            cos_b, cos_a = np.cos(k * xs[1:]), np.cos(k * xs[:-1])
            total = np.sum((ys[1:] * sin_b - ys[:-1] * sin_a) / k + slope * (cos_b - cos_a) / k**2)
            return 2 * float(total)

        def integrand(s):
            base = self.radial_density(s)
            if d == 1:
                return 2 * base * math.cos(2 * math.pi * s * r)
            return 2 * math.pi * s * base * special.j0(2 * math.pi * s * r)
        return _quad(integrand, radii[0], radii[-1], points=radii[1:-1])[0] + (
            _quad(integrand, 0.0, radii[0])[0] if radii[0] > 0 else 0.0)

    def descriptor(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension, "eta": self.eta}
        if self.kappa is not None:
            out["kappa"] = self.kappa
        if self.radius is not None:
            out["radius"] = self.radius
        if self.table is not None:
            out["table"] = [list(self.table[0]), list(self.table[1])]
        return out

    @classmethod
    def from_descriptor(cls, desc: dict) -> "SpectralMeasure":
        table = desc.get("table")
        if table is not None:
            table = (tuple(table[0]), tuple(table[1]))
        return cls(desc["kind"], int(desc["dimension"]), float(desc["eta"]),
                   kappa=desc.get("kappa"), radius=desc.get("radius"), table=table)


def _quad(func, a, b, rel=1e-12, limit=500, **kw):
    val, err, info = integrate.quad(func, a, b, epsabs=0.0, epsrel=rel, limit=limit,
                                    full_output=True, **kw)[:3]
    if err > max(1e-9 * abs(val), 1e-13):
        raise QuadratureError(f"quad on [{a}, {b}] did not converge: value {val}, error {err}")
    return val, err


# --------------------------------------------------------------------------
# Fourier pair check


def validate_fourier_pair(measure: SpectralMeasure, width: float = 1.0) -> float:
    """Relative residual of  int f phi dx = int F phi dlam  for a Gaussian phi.

    ``phi(x) = exp(-|x|^2 / (2 width^2))`` with Fourier transform
    ``(2 pi width^2)^{d/2} exp(-2 pi^2 width^2 |xi|^2)``.  Both sides are
    reduced to one-dimensional radial integrals.
    """
    d = measure.dimension
    omega = _SPHERE_AREA[d]
    w = float(width)

    def phi(r):
        return math.exp(-r * r / (2 * w * w))

    def phi_hat(rho):
        return (2 * math.pi * w * w) ** (d / 2) * math.exp(-2 * math.pi**2 * w * w * rho * rho)

    if measure.kind == "point_mass":
        left = omega * _quad(lambda r: r ** (d - 1) * phi(r), 0.0, math.inf)[0]
        right = phi_hat(0.0)
        return abs(left - right) / abs(right)

    rmax = 40.0 * w
    if measure.kind == "riesz":
        k = measure.kappa
        # integrable endpoint singularities handled by algebraic weights
        left = omega * (_quad(phi, 0.0, w, weight="alg", wvar=(d - 1 - k, 0))[0]
                        + _quad(lambda r: r ** (d - 1 - k) * phi(r), w, rmax)[0])
        c = riesz_constant(k, d)
        s = 1.0 / w
        right = omega * c * (_quad(phi_hat, 0.0, s, weight="alg", wvar=(k - 1, 0))[0]
                             + _quad(lambda p: p ** (k - 1) * phi_hat(p), s, 40.0 * s)[0])
        return abs(left - right) / abs(right)

    R = measure.support_radius
    right = omega * _quad(lambda p: p ** (d - 1) * float(measure.radial_density(p)) * phi_hat(p),
                          0.0, R, points=_breaks(measure))[0]
    # the covariance oscillates on scale 1/R; split so quad sees each lobe
    edges = np.unique(np.concatenate([np.arange(0.0, rmax, 0.5 / R), [rmax]]))
    left = omega * sum(
        _quad(lambda r: r ** (d - 1) * measure.covariance(r) * phi(r) if r > 0 else
              (measure.covariance(1e-300) if d == 1 else 0.0), a, b, rel=1e-11)[0]
        for a, b in zip(edges[:-1], edges[1:]) if a < 12 * w)
    return abs(left - right) / max(abs(right), 1e-300)


def _breaks(measure: SpectralMeasure):
    if measure.kind == "tabulated":
        return list(measure.table[0][1:-1]) or None
    return None


# --------------------------------------------------------------------------
# Gram matrix of the sine basis


@dataclass(frozen=True)
class QuadratureBudget:
    """Fourier-side quadrature layout: Gauss-Legendre panels of fixed width."""

    panel_nodes: int = 8
    panel_width: float = 0.5
    radius: float | None = None  # default: far enough that the tail is < 1e-10


def _mode_factor_1d(n_modes: int, xi: np.ndarray) -> np.ndarray:
    """Real profiles psi_k(xi) with |F e_k(xi)| = |psi_k(xi)|, shape (n_modes, ...).

    F e_k(xi) = exp(-i pi xi) * (1 for odd k, -i for even k) * psi_k(xi);
    the phases cancel in every entry of the Gram matrix that can be nonzero.
    """
    k = np.arange(1, n_modes + 1)
    kk = k.reshape((-1,) + (1,) * np.ndim(xi))
    minus = np.sinc(xi - kk / 2)
    plus = np.sinc(xi + kk / 2)
    odd = (kk % 2 == 1)
    sign = np.where(odd, (-1.0) ** ((kk - 1) // 2), (-1.0) ** (kk // 2))
    return (math.sqrt(2.0) / 2) * sign * np.where(odd, minus + plus, minus - plus)


def mode_means(n_modes: int, d: int = 1) -> np.ndarray:
    """int e_k over the cube, flattened in row-major mode order."""
    k = np.arange(1, n_modes + 1)
    one = np.where(k % 2 == 1, 2 * math.sqrt(2.0) / (math.pi * k), 0.0)
    if d == 1:
        return one
    return np.multiply.outer(one, one).ravel()


def _parity_mask(n_modes: int, d: int) -> np.ndarray:
    par = np.arange(1, n_modes + 1) % 2
    same = par[:, None] == par[None, :]
    if d == 1:
        return same
    # (j1, j2), (k1, k2) flattened row-major
    return np.einsum("ac,bd->abcd", same, same).reshape(n_modes**2, n_modes**2)


def _radial_panels(lo: float, hi: float, width: float, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.arange(lo, hi, width)
    edges = np.append(edges, hi) if edges[-1] < hi else edges
    for a, b in zip(edges[:-1], edges[1:]):
        h = 0.5 * (b - a)
        yield a + h * (x + 1), h * w


def _near_origin_nodes(measure: SpectralMeasure, upper: float, nodes: int):
    """Radial nodes/weights on [0, upper] for  int rho^(d-1) dens(rho) g(rho) drho.

    Riesz densities give rho^(kappa-1); substituting s = rho^kappa makes the
    integrand regular.  Returned weights already include rho^(d-1) dens(rho).
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    d = measure.dimension
    if measure.kind == "riesz":
        k = measure.kappa
        c = riesz_constant(k, d)
        smax = upper**k
        pts, wts = [], []
        for a, b in ((0.0, 0.5 * smax), (0.5 * smax, smax)):
            s = a + 0.5 * (b - a) * (x + 1)
            pts.append(s ** (1 / k))
            wts.append(0.5 * (b - a) * w * c / k)
        return np.concatenate(pts), np.concatenate(wts)
    rho, wt = map(np.concatenate, zip(*_radial_panels(0.0, upper, min(upper, 0.5), nodes)))
    return rho, wt * rho ** (d - 1) * measure.radial_density(rho)


def _radial_rule(measure: SpectralMeasure, n_modes: int, budget: QuadratureBudget):
    d = measure.dimension
    if measure.kind == "riesz":
        default = 4000.0 if d == 1 else 120.0 + 4 * n_modes
        top = budget.radius or default
        rho0, w0 = _near_origin_nodes(measure, 1.0, 4 * budget.panel_nodes)
        far = list(_radial_panels(1.0, top, budget.panel_width, budget.panel_nodes))
        rho = np.concatenate([rho0] + [p for p, _ in far])
        wts = np.concatenate([w0] + [q * p ** (d - 1) * measure.radial_density(p) for p, q in far])
        return rho, wts
    top = min(budget.radius or math.inf, measure.support_radius)
    pieces = [0.0]
    if measure.kind == "tabulated":
        pieces = sorted(set([0.0] + [r for r in measure.table[0] if r < top]))
    pieces.append(top)
    rhos, wts = [], []
    for a, b in zip(pieces[:-1], pieces[1:]):
        for p, q in _radial_panels(a, b, budget.panel_width, budget.panel_nodes):
            rhos.append(p)
            wts.append(q * p ** (d - 1) * measure.radial_density(p))
    return np.concatenate(rhos), np.concatenate(wts)


def _gram_fourier(measure: SpectralMeasure, n_modes: int, budget: QuadratureBudget) -> np.ndarray:
    d = measure.dimension
    if measure.is_atomic:
        m = mode_means(n_modes, d)
        return np.outer(m, m)
    rho, wts = _radial_rule(measure, n_modes, budget)
    if d == 1:
        # even integrand on parity-matched entries: integrate over [0, inf) twice
        psi = _mode_factor_1d(n_modes, rho)
        gram = 2.0 * (psi * wts) @ psi.T
        return gram * _parity_mask(n_modes, 1)
    x, w = np.polynomial.legendre.leggauss(budget.panel_nodes)
    gram = np.zeros((n_modes**2, n_modes**2))
    # quarter-plane by symmetry; angular resolution grows with the radius
    for start in range(0, rho.size, 256):
        r = rho[start:start + 256]
        wr = wts[start:start + 256]
        n_theta = budget.panel_nodes * (2 + int(math.ceil(r.max() / 2)))
        th, tw = np.polynomial.legendre.leggauss(n_theta)
        th = (th + 1) * math.pi / 4
        tw = tw * math.pi / 4
        xi1 = np.outer(r, np.cos(th)).ravel()
        xi2 = np.outer(r, np.sin(th)).ravel()
        ww = np.outer(wr, tw).ravel() * 4.0
        p1 = _mode_factor_1d(n_modes, xi1)
        p2 = _mode_factor_1d(n_modes, xi2)
        psi = (p1[:, None, :] * p2[None, :, :]).reshape(n_modes**2, -1)
        gram += (psi * ww) @ psi.T
    del x, w
    return gram * _parity_mask(n_modes, 2)


def _ordered_cholesky(q: np.ndarray, tol: float) -> np.ndarray:
    """Lower factor L (n x r) with q = L L^T, skipping directions below ``tol``.

    Columns follow the natural mode order, so the first H-orthonormal
    direction is e_1 / ||e_1||_H whenever that norm is nonzero.
    """
    n = q.shape[0]
    cols = []
    resid = q.copy()
    for k in range(n):
        piv = resid[k, k]
        if piv <= tol:
            continue
        col = resid[:, k] / math.sqrt(piv)
        col[:k] = 0.0
        cols.append(col)
        resid -= np.outer(col, col)
    if not cols:
        return np.zeros((n, 0))
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class HGram:
    """Gram matrix Q_jk = <e_j, e_k>_H of the first N^d sine modes."""

    matrix: np.ndarray
    measure: SpectralMeasure
    n_modes: int
    budget: QuadratureBudget = QuadratureBudget()
    factor: np.ndarray = field(init=False, repr=False)
    min_eigenvalue: float = field(init=False)

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != self.n_modes ** self.measure.dimension:
            raise GramError(f"Gram matrix shape {q.shape} does not match "
                            f"N={self.n_modes}, d={self.measure.dimension}")
        q = 0.5 * (q + q.T)
        tr = float(np.trace(q))
        tol = 1e-10 * max(tr, 1e-300)
        evals, evecs = np.linalg.eigh(q)
        lo = float(evals[0])
        if lo < -tol:
            raise GramError(f"Gram matrix not PSD: eigenvalue {lo:.3e} below -{tol:.3e}")
        if lo < 0:
            q = (evecs * np.clip(evals, 0, None)) @ evecs.T
            q = 0.5 * (q + q.T)
        q.setflags(write=False)
        fac = _ordered_cholesky(q, tol)
        fac.setflags(write=False)
        object.__setattr__(self, "matrix", q)
        object.__setattr__(self, "factor", fac)
        object.__setattr__(self, "min_eigenvalue", lo)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def orthonormal_coefficients(self) -> np.ndarray:
        """Sine coefficients B (size x rank) of an H-orthonormal family.

        Column j holds the coefficients of hat-e_j; B^T Q B = I and
        <e_k, hat-e_j>_H = factor[k, j].
        """
        L = self.factor
        return L @ np.linalg.inv(L.T @ L)

    def h_norm_sq(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float).ravel()
        return float(c @ self.matrix @ c)

    def save(self, path) -> None:
        save_gram(self, path)


def build_gram(measure: SpectralMeasure, n_modes: int,
               budget: QuadratureBudget | None = None) -> HGram:
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    budget = budget or QuadratureBudget()
    return HGram(_gram_fourier(measure, n_modes, budget), measure, n_modes, budget)


def h_inner(phi, psi, gram: HGram) -> float:
    phi = np.asarray(phi, dtype=float).ravel()
    psi = np.asarray(psi, dtype=float).ravel()
    if phi.size != gram.size or psi.size != gram.size:
        raise ValueError(f"coefficient vectors of length {phi.size}, {psi.size} "
                         f"do not match Gram size {gram.size}")
    return float(phi @ gram.matrix @ psi)


def sample_increment(gram: HGram, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One time step of noise tested against each sine mode: N(0, Q dt)."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    z = rng.standard_normal(gram.rank)
    return gram.factor @ z * math.sqrt(dt)


# --------------------------------------------------------------------------
# Walsh integral against the noise vs. cylindrical series


@dataclass
class IntegralCheck:
    exact_variance: float
    walsh_mean: float
    walsh_variance: float
    series_mean: float
    series_variance: float
    max_pathwise_gap: float
    trials: int

    def zscores(self) -> dict[str, float]:
        n = self.trials
        v = self.exact_variance
        if v == 0:
            return {k: 0.0 for k in ("walsh_mean", "walsh_var", "series_mean", "series_var")}
        se_mean = math.sqrt(v / n)
        se_var = v * math.sqrt(2.0 / (n - 1))
        return {
            "walsh_mean": self.walsh_mean / se_mean,
            "walsh_var": (self.walsh_variance - v) / se_var,
            "series_mean": self.series_mean / se_mean,
            "series_var": (self.series_variance - v) / se_var,
        }

    @property
    def residual(self) -> float:
        """Largest moment deviation in standard errors, or the pathwise gap."""
        z = self.zscores()
        return max([abs(x) for x in z.values()] + [self.max_pathwise_gap])


def walsh_vs_series_check(integrand, dt: float, gram: HGram, rng: np.random.Generator,
                          trials: int = 100_000) -> IntegralCheck:
    """Integrate a piecewise-constant H-valued integrand two ways.

    ``integrand`` has shape (steps, size): sine coefficients of g on each
    step.  The Walsh side tests the noise against g directly,
    sum_steps g . dW with dW ~ N(0, Q dt) the per-mode noise; the series
    side expands along an H-orthonormal basis, sum_j <g, hat-e_j>_H dB^j.
    Both use the same normals, and the exact variance is
    sum_steps ||g||_H^2 dt.
    """
    g = np.atleast_2d(np.asarray(integrand, dtype=float))
    if g.shape[1] != gram.size:
        raise ValueError("integrand does not match Gram size")
    steps = g.shape[0]
    exact = float(sum(gram.h_norm_sq(row) for row in g) * dt)
    z = rng.standard_normal((trials, steps, gram.rank)) * math.sqrt(dt)
    dw = z @ gram.factor.T                                  # noise tested on sine modes
    walsh = np.einsum("tsk,sk->t", dw, g)
    proj = g @ gram.factor                                  # <g, hat-e_j>_H per step
    series = np.einsum("tsj,sj->t", z, proj)
    return IntegralCheck(
        exact_variance=exact,
        walsh_mean=float(walsh.mean()),
        walsh_variance=float(walsh.var(ddof=1)),
        series_mean=float(series.mean()),
        series_variance=float(series.var(ddof=1)),
        max_pathwise_gap=float(np.max(np.abs(walsh - series))) if trials else 0.0,
        trials=trials,
    )


# --------------------------------------------------------------------------
# persistence

_GRAM_MAGIC = b"SHEGRAM1"


def save_gram(gram: HGram, path) -> None:
    """Little-endian: magic, d, N, descriptor length, JSON descriptor, row-major f8."""
    desc = json.dumps({"measure": gram.measure.descriptor(),
                       "budget": [gram.budget.panel_nodes, gram.budget.panel_width,
                                  gram.budget.radius]},
                      sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_GRAM_MAGIC)
        fh.write(struct.pack("<III", gram.measure.dimension, gram.n_modes, len(desc)))
        fh.write(desc)
        fh.write(np.ascontiguousarray(gram.matrix, dtype="<f8").tobytes())


def load_gram(path) -> HGram:
    with open(path, "rb") as fh:
        if fh.read(len(_GRAM_MAGIC)) != _GRAM_MAGIC:
            raise ValueError(f"{path} is not a Gram file")
        d, n, ln = struct.unpack("<III", fh.read(12))
        desc = json.loads(fh.read(ln).decode())
        size = n**d
        data = np.frombuffer(fh.read(8 * size * size), dtype="<f8").reshape(size, size)
    measure = SpectralMeasure.from_descriptor(desc["measure"])
    nodes, width, radius = desc["budget"]
    gram = HGram.__new__(HGram)
    # bypass the symmetrisation in __post_init__ so the reload is bit-exact
    mat = data.astype(float)
    mat.setflags(write=False)
    budget = QuadratureBudget(nodes, width, radius)
    object.__setattr__(gram, "matrix", mat)
    object.__setattr__(gram, "measure", measure)
    object.__setattr__(gram, "n_modes", n)
    object.__setattr__(gram, "budget", budget)
    tr = float(np.trace(mat))
    fac = _ordered_cholesky(mat, 1e-10 * max(tr, 1e-300))
    fac.setflags(write=False)
    object.__setattr__(gram, "factor", fac)
    object.__setattr__(gram, "min_eigenvalue", float(np.linalg.eigvalsh(mat)[0]))
    return gram
