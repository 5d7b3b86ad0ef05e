"""Explicit constants of the moment and transportation bounds.

Every constant is evaluated exactly as its closed form reads.  Two of them
are defined through one-dimensional optimisations (over the factorisation
exponent ``alpha`` and over an auxiliary moment order ``q``); those are
carried out in log space, since the values routinely exceed 1e20.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .noise import SpectralMeasure, _SPHERE_AREA, riesz_constant

EIGHT_PI2 = 8 * math.pi**2
WINDOW_SHRINK = 1e-6


class WindowError(ValueError):
    """The alpha window is empty: the moment order is below its threshold."""

    def __init__(self, p, d, eta):
        self.threshold = (4 + d) / (1 - eta)
        super().__init__(
            f"p={p} must exceed (4+d)/(1-eta) = {self.threshold:g} (d={d}, eta={eta})")


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------
# K_eta


@dataclass(frozen=True)
class KEta:
    value: float
    finite: bool
    levels: int = 0
    tail_exponent: float | None = None

    def __float__(self):
        return self.value


def _riesz_k_eta_closed(kappa: float, d: int, eta: float) -> float:
    # int_0^inf r^(kappa-1) (1+r^2)^-eta dr = B(kappa/2, eta - kappa/2) / 2
    return riesz_constant(kappa, d) * _SPHERE_AREA[d] * 0.5 * special.beta(kappa / 2, eta - kappa / 2)


def k_eta(measure: SpectralMeasure, eta: float | None = None, max_levels: int = 20) -> KEta:
    """int lam(dxi) / (1 + |xi|^2)^eta, with divergence reported in ``finite``.

    Unbounded radial densities are integrated over dyadic shells
    [2^m, 2^(m+1)].  The shell contributions decay geometrically exactly
    when the hypothesis holds; the last ratio extrapolates the tail, and a
    non-decaying ratio after ``max_levels`` shells means divergence.
    """
    eta = measure.eta if eta is None else float(eta)
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    d = measure.dimension
    omega = _SPHERE_AREA[d]
    if measure.kind == "point_mass":
        return KEta(1.0, True)

    def radial(rho):
        return omega * rho ** (d - 1) * float(measure.radial_density(rho)) * (1 + rho * rho) ** (-eta)

    if measure.kind in ("ball_uniform", "tabulated"):
        pts = None
        if measure.kind == "tabulated":
            pts = list(measure.table[0][1:-1]) or None
        val = integrate.quad(radial, 0.0, measure.support_radius, points=pts,
                             epsabs=0.0, epsrel=1e-13, limit=500)[0]
        return KEta(val, True)

    kap = measure.kappa
    c = riesz_constant(kap, d) * omega
    head = integrate.quad(lambda r: c * (1 + r * r) ** (-eta), 0.0, 1.0, weight="alg",
                          wvar=(kap - 1, 0), epsabs=0.0, epsrel=1e-13)[0]
    shells = []
    for m in range(max_levels):
        a, b = 2.0**m, 2.0 ** (m + 1)
        shells.append(integrate.quad(lambda r: c * r ** (kap - 1) * (1 + r * r) ** (-eta), a, b,
                                     epsabs=0.0, epsrel=1e-13)[0])
    ratio = shells[-1] / shells[-2]
    expo = math.log2(ratio)
    if expo > -1e-3:
        return KEta(math.inf, False, max_levels, expo)
    total = head + math.fsum(shells) + shells[-1] * ratio / (1 - ratio)
    return KEta(total, True, max_levels, expo)


# --------------------------------------------------------------------------
# factorisation constants


def alpha_window(p: float, d: int, eta: float) -> tuple[float, float]:
    """Open interval of admissible factorisation exponents."""
    lo = (d + 2) / (2 * p)
    hi = 0.5 - 1 / p - eta / 2
    if not p > (4 + d) / (1 - eta) or not lo < hi:
        raise WindowError(p, d, eta)
    return lo, hi


def log_c_prime(T: float, p: float, alpha: float, d: int) -> float:
    denom = alpha * p - 1 - d / 2
    if denom <= 0:
        raise ValueError(f"alpha={alpha} violates alpha > d/(2p) + 1/p = {(d / 2 + 1) / p}")
    s = abs(math.sin(math.pi * alpha)) / math.pi
    if s == 0:
        return -math.inf
    return (p * math.log(s) - (d / 2) * math.log(4 * math.pi)
            + (p - 1) * math.log((p - 1) / denom) + (alpha * p - d / 2) * math.log(T))


def c_prime(T: float, p: float, alpha: float, d: int) -> float:
    return _safe_exp(log_c_prime(T, p, alpha, d))


def log_c_double_prime(T: float, p: float, alpha: float, eta: float, K: float) -> float:
    d1 = p - 2 - 2 * alpha * p
    d2 = d1 - eta * p
    if d1 <= 0 or d2 <= 0:
        raise ValueError(f"alpha={alpha} violates alpha < 1/2 - 1/p - eta/2 = {0.5 - 1 / p - eta / 2}")
    e = (p - 2) / 2
    t1 = e * math.log((p - 2) / d1) + (p / 2 - 1 - alpha * p) * math.log(T)
    # log(eta) - log(8 pi^2) rather than log(eta / 8 pi^2), which underflows for subnormal eta
    coef = 0.0 if eta == 0 else eta * e * (math.log(eta) - math.log(EIGHT_PI2))
    t2 = coef + e * math.log((p - 2) / d2) + (p / 2 - 1 - alpha * p - eta * p / 2) * math.log(T)
    return math.log(0.25) + (p / 2) * math.log(8 * p * K) + float(np.logaddexp(t1, t2))


def c_double_prime(T: float, p: float, alpha: float, eta: float, K: float) -> float:
    return _safe_exp(log_c_double_prime(T, p, alpha, eta, K))


def log_product(alpha: float, T: float, p: float, eta: float, d: int, K: float) -> float:
    return log_c_prime(T, p, alpha, d) + log_c_double_prime(T, p, alpha, eta, K)


def golden_section(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    """Minimise a unimodal f on [a, b]; returns (argmin, fmin)."""
    inv = (math.sqrt(5) - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def log_c_T_p_eta(T: float, p: float, eta: float, d: int, K: float) -> tuple[float, float]:
    """(log C_{T,p,eta}, minimising alpha) over the shrunken open window."""
    lo, hi = alpha_window(p, d, eta)
    a, b = lo + WINDOW_SHRINK, hi - WINDOW_SHRINK
    if not a < b:
        raise WindowError(p, d, eta)
    alpha, val = golden_section(lambda x: log_product(x, T, p, eta, d, K), a, b)
    return val, alpha


def c_T_p_eta(T: float, p: float, eta: float, d: int, K: float) -> tuple[float, float]:
    val, alpha = log_c_T_p_eta(T, p, eta, d, K)
    return _safe_exp(val), alpha


def c_T_p_eta_bound(T: float, p: float, eta: float, d: int, K: float) -> float:
    """Closed-form upper bound on C_{T,p,eta}; +inf at eta = 0 (the (p-2)/(p eta) factor)."""
    alpha_window(p, d, eta)
    m1 = ((3 * p - 4) / (p - 4 - d)) ** (1.5 * p - 2)
    if eta == 0:
        m2 = math.inf
    else:
        m2 = ((2 * (p - 1) / ((1 - eta) * p - 4 - d)) ** (p - 1)
              * ((p - 2) / (p * eta)) ** (p / 2 - 1))
    pre = p ** (p / 2) * 0.25 * (4 * math.pi) ** (-d / 2) * (math.sqrt(8 * K) / math.pi) ** p
    coef = 1.0 if eta == 0 else math.exp(eta * (p - 2) / 2 * (math.log(eta) - math.log(EIGHT_PI2)))
    tail = coef * ((3 * p - 4) / ((1 - eta) * p - 4 - d)) ** (1.5 * p - 2)
    return pre * (max(m1, m2) * T ** (p / 2 - 1 - d / 2)
                  + tail * T ** ((1 - eta) * p / 2 - 1 - d / 2))


def log_small_p_objective(q: float, T: float, p: float, eta: float, eps: float,
                          d: int, K: float) -> float:
    log_c = log_c_T_p_eta(T, q, eta, d, K)[0]
    lq = math.log(q)
    a = float(np.logaddexp(0.0, lq + log_c - math.log(q - p)))
    b = float(np.logaddexp(math.log(q - p), lq + log_c))
    return a + math.log(p) - (q / p) * lq + (q / p - 1) * (b + math.log(eps))


def log_c_T_p_eta_eps(T: float, p: float, eta: float, eps: float, d: int, K: float,
                      grid: int = 61) -> tuple[float, float]:
    """(log C_{T,p,eta,eps}, minimising q) for 0 < p <= (4+d)/(1-eta).

    The infimum runs over q above the threshold; q is scanned on a grid
    log-spaced in its distance to the threshold, then refined by golden
    section around the best grid point.
    """
    q0 = (4 + d) / (1 - eta)
    if not 0 < p <= q0:
        raise ValueError(f"p={p} must lie in (0, {q0:g}]; use the large-p constant above it")
    if not eps > 0:
        raise ValueError("eps must be positive")
    logs = np.linspace(math.log(1e-4), math.log(1e3), grid)

    def obj(s):
        try:
            return log_small_p_objective(q0 + math.exp(s), T, p, eta, eps, d, K)
        except (WindowError, ValueError, OverflowError):
            return math.inf

    vals = np.array([obj(s) for s in logs])
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError("no finite candidate for the small-p constant")
    i = int(np.nanargmin(np.where(finite, vals, np.inf)))
    a, b = logs[max(i - 1, 0)], logs[min(i + 1, grid - 1)]
    s, val = golden_section(obj, a, b, tol=1e-10)
    if vals[i] < val:
        s, val = logs[i], vals[i]
    return val, q0 + math.exp(s)


def c_T_p_eta_eps(T: float, p: float, eta: float, eps: float, d: int, K: float) -> float:
    return _safe_exp(log_c_T_p_eta_eps(T, p, eta, eps, d, K)[0])


# --------------------------------------------------------------------------
# kernel H-norm bounds and the transportation constant


def c_G_T_eta(T: float, eta: float, K: float) -> float:
    if not T > 0:
        raise ValueError("T must be positive")
    brk = eta / EIGHT_PI2
    if T <= brk:
        return K * brk**eta * T ** (1 - eta) / (1 - eta)
    return K * T + eta**2 / (EIGHT_PI2 * (1 - eta))


def g_h_norm_bound(t: float, eta: float, K: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    if eta == 0:
        return K
    # one power of the ratio, so the bound is exactly K at the breakpoint
    return K * max(1.0, (eta / EIGHT_PI2 / t) ** eta)


def log_theorem_constant(T: float, L_sigma: float, L_b: float, K_sigma: float,
                         eta: float, K: float, d: int) -> float:
    if not K_sigma > 0:
        raise ValueError("K_sigma must be positive")
    if L_sigma < 0 or L_b < 0:
        raise ValueError("Lipschitz constants must be nonnegative")
    rate = T * L_b**2
    if L_sigma > 0:
        # eps_0 = 1 / (6 L_sigma^2); with L_sigma = 0 the stochastic term vanishes
        log_ceps = log_c_T_p_eta_eps(T, 2.0, eta, 1 / (6 * L_sigma**2), d, K)[0]
        rate += _safe_exp(log_ceps + 2 * math.log(L_sigma))
    return math.log(6) + 2 * math.log(K_sigma) + math.log(c_G_T_eta(T, eta, K)) + 6 * rate * T


def theorem_constant(T: float, L_sigma: float, L_b: float, K_sigma: float,
                     eta: float, K: float, d: int) -> float:
    return _safe_exp(log_theorem_constant(T, L_sigma, L_b, K_sigma, eta, K, d))


# --------------------------------------------------------------------------


@dataclass
class ConstantsReport:
    T: float
    p: float
    d: int
    eta: float
    K_eta: float
    K_eta_finite: bool
    alpha_lo: float
    alpha_hi: float
    alpha_star: float
    C_prime: float
    C_double_prime: float
    C_Tpeta: float
    C_Tpeta_bound: float
    p_small: float
    eps: float
    C_Tpetaeps: float
    q_star: float
    C_GTeta: float
    L_sigma: float
    L_b: float
    K_sigma: float
    theorem_C: float
    log_theorem_C: float

    def rows(self) -> list[tuple[str, object]]:
        return list(asdict(self).items())


def constants_report(measure: SpectralMeasure, T: float, p: float, p_small: float = 2.0,
                     eps: float | None = None, L_sigma: float = 1.0, L_b: float = 0.0,
                     K_sigma: float = 1.0) -> ConstantsReport:
    d, eta = measure.dimension, measure.eta
    ke = k_eta(measure)
    if not ke.finite:
        raise ValueError(f"K_eta diverges for {measure.descriptor()}")
    K = ke.value
    lo, hi = alpha_window(p, d, eta)
    c, alpha = c_T_p_eta(T, p, eta, d, K)
    if eps is None:
        eps = 1 / (6 * L_sigma**2) if L_sigma > 0 else 1.0
    log_eps_c, q_star = log_c_T_p_eta_eps(T, p_small, eta, eps, d, K)
    log_thm = log_theorem_constant(T, L_sigma, L_b, K_sigma, eta, K, d)
    return ConstantsReport(
        T=T, p=p, d=d, eta=eta, K_eta=K, K_eta_finite=ke.finite,
        alpha_lo=lo, alpha_hi=hi, alpha_star=alpha,
        C_prime=c_prime(T, p, alpha, d),
        C_double_prime=c_double_prime(T, p, alpha, eta, K),
        C_Tpeta=c, C_Tpeta_bound=c_T_p_eta_bound(T, p, eta, d, K),
        p_small=p_small, eps=eps, C_Tpetaeps=_safe_exp(log_eps_c), q_star=q_star,
        C_GTeta=c_G_T_eta(T, eta, K),
        L_sigma=L_sigma, L_b=L_b, K_sigma=K_sigma,
        theorem_C=_safe_exp(log_thm), log_theorem_C=log_thm,
    )
