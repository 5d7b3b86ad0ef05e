"""Monte Carlo checks of the moment bounds for the stochastic convolution

    Z(t, x) = int_0^t int G_{t-s}(x, y) sigma(s, y) F(ds, dy).

Three inequalities are checked: the pointwise p-th moment bound with
constant (4p)^{p/2}, the bound on E sup |Z|^p for large p, and its
epsilon-variant for small p.  The factorisation identity behind the
sup bound is checked pathwise as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import constants as C
from .noise import HGram
from .solver import (CoefficientSpec, GalerkinSolver, SimulationConfig, _eigenvalues,
                     draw_normals)

CHUNK = 256
MIN_TRIALS = 1000


@dataclass
class MomentExperiment:
    p: float
    config: SimulationConfig
    gram: HGram
    coeffs: CoefficientSpec
    u0: object = None
    trials: int | None = None
    confidence: float = 4.0

    def __post_init__(self):
        if self.trials is None:
            self.trials = self.config.trials
        if self.trials < MIN_TRIALS:
            raise ValueError(f"need at least {MIN_TRIALS} trials, got {self.trials}")
        if not self.p > 0:
            raise ValueError("moment order must be positive")

    @property
    def constant_sigma(self) -> float | None:
        return self.coeffs.sigma_const


@dataclass
class MomentReport:
    bound: str
    p: float
    lhs: float
    lhs_se: float
    rhs: float
    confidence: float
    trials: int
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.confidence * self.lhs_se)

    @property
    def margin(self) -> float:
        return self.rhs / self.lhs if self.lhs > 0 else math.inf

    def row(self) -> dict:
        out = {"bound": self.bound, "p": self.p, "lhs": self.lhs,
               "lhs_se": self.lhs_se, "rhs": self.rhs, "confidence": self.confidence,
               "trials": self.trials, "passed": self.passed}
        out.update(self.metadata)
        return out


def gaussian_abs_moment(p: float) -> float:
    """E|N(0, 1)|^p."""
    return 2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)


def _mode_values(config: SimulationConfig, x) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(1, config.n_modes + 1)
    one = [math.sqrt(2.0) * np.sin(math.pi * k * xi) for xi in xs]
    return one[0] if config.dimension == 1 else np.multiply.outer(one[0], one[1]).ravel()


def _step_index(config: SimulationConfig, t: float) -> int:
    n = int(round(t / config.dt))
    if abs(n * config.dt - t) > 1e-9 * max(t, config.dt) or not 0 <= n <= config.steps:
        raise ValueError(f"t={t} is not on the solver time grid")
    return n


# --------------------------------------------------------------------------
# sampling


def convolution_samples(exp: MomentExperiment, t: float, x, streams) -> np.ndarray:
    """Z(t, x) for each stream (the noise part of the solution only)."""
    cfg = exp.config
    n = _step_index(cfg, t)
    ev = _mode_values(cfg, x)
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    a0 = solver.initial_coefficients(exp.u0)
    streams = list(streams)
    out = []
    for i in range(0, len(streams), CHUNK):
        z = draw_normals(cfg.seed, streams[i:i + CHUNK], cfg.steps, exp.gram.rank)
        for step, _, conv in solver.iterate(a0, z):
            if step == n:
                out.append(conv @ ev)
                break
    return np.concatenate(out)


def convolution_sample(exp: MomentExperiment, t: float, x, stream: int = 0) -> float:
    return float(convolution_samples(exp, t, x, [stream])[0])


def convolution_variance(config: SimulationConfig, gram: HGram, sigma: float, t: float, x) -> float:
    """Exact variance of the discrete convolution for constant sigma.

    Z(t_n, x) = sigma sum_{m<n} sum_k exp(-lam_k (t_n - t_m)) e_k(x) dW_k(m),
    so Var = sigma^2 dt sum_{m<n} v_m^T Q v_m with v_m the damped mode values.
    """
    n = _step_index(config, t)
    lam = _eigenvalues(config.n_modes, config.dimension)
    ev = _mode_values(config, x)
    lags = config.dt * np.arange(1, n + 1)
    v = np.exp(-np.outer(lags, lam)) * ev
    return float(sigma**2 * config.dt * np.einsum("mi,ij,mj->", v, gram.matrix, v))


def kernel_h_norm_sq(gram: HGram, t: float, x) -> float:
    """||G_t(x, .)||_H^2 restricted to the retained modes."""
    d, n = gram.measure.dimension, gram.n_modes
    lam = _eigenvalues(n, d)
    k = np.arange(1, n + 1)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    one = [math.sqrt(2.0) * np.sin(math.pi * k * xi) for xi in xs]
    ev = one[0] if d == 1 else np.multiply.outer(one[0], one[1]).ravel()
    a = np.exp(-lam * t) * ev
    return float(a @ gram.matrix @ a)


def kernel_h_norm_sq_integral(gram: HGram, t: float, x) -> float:
    """int_0^t ||G_s(x, .)||_H^2 ds over the retained modes, in closed form."""
    d, n = gram.measure.dimension, gram.n_modes
    lam = _eigenvalues(n, d)
    k = np.arange(1, n + 1)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    one = [math.sqrt(2.0) * np.sin(math.pi * k * xi) for xi in xs]
    ev = one[0] if d == 1 else np.multiply.outer(one[0], one[1]).ravel()
    s = lam[:, None] + lam[None, :]
    w = -np.expm1(-s * t) / s
    return float(np.einsum("i,ij,ij,j->", ev, gram.matrix, w, ev))


# --------------------------------------------------------------------------
# pointwise moment bound


def verify_pointwise_moment(exp: MomentExperiment, t: float, x, exact: bool | None = None) -> MomentReport:
    """E|Z(t,x)|^p <= (4p)^{p/2} (int_0^t ||G_{t-s}(x,.) ||sigma(s,.)||_p||_H^2 ds)^{p/2}.

    Constant sigma: the lhs is Gaussian with the exact discrete variance, so
    no sampling is needed unless ``exact=False``.  State-dependent sigma:
    Monte Carlo lhs, and the weight ||sigma(s, y)||_{L^p} estimated per time
    slice from the same trials.
    """
    p = exp.p
    if p < 2:
        raise ValueError("pointwise bound requires p >= 2")
    cfg = exp.config
    trials = exp.trials
    sig = exp.constant_sigma
    pref = (4 * p) ** (p / 2)
    if sig is not None:
        rhs = pref * (sig**2 * kernel_h_norm_sq_integral(exp.gram, t, x)) ** (p / 2)
        if exact is None or exact:
            var = convolution_variance(cfg, exp.gram, sig, t, x)
            lhs = var ** (p / 2) * gaussian_abs_moment(p)
            return MomentReport("pointwise", p, lhs, 0.0, rhs, exp.confidence, 0,
                                {"t": t, "x": _fmt(x), "mode": "exact", "variance": var})
        vals = np.abs(convolution_samples(exp, t, x, range(trials))) ** p
        meta = {"t": t, "x": _fmt(x), "mode": "monte_carlo", "heavy_tail": _kurtosis_flag(vals)}
        return MomentReport("pointwise", p, float(vals.mean()), _se(vals), rhs, exp.confidence,
                            trials, meta)

    n = _step_index(cfg, t)
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    a0 = solver.initial_coefficients(exp.u0)
    ev = _mode_values(cfg, x)
    lhs_vals = []
    acc = np.zeros((n, solver.phi.shape[1]))
    for i in range(0, trials, CHUNK):
        z = draw_normals(cfg.seed, range(i, min(i + CHUNK, trials)), cfg.steps, exp.gram.rank)
        for step, a, conv in solver.iterate(a0, z):
            if step < n:
                acc[step] += np.sum(np.abs(exp.coeffs.sigma(solver.to_grid(a))) ** p, axis=0)
            if step == n:
                lhs_vals.append(np.abs(conv @ ev) ** p)
                break
    weight = (acc / trials) ** (1 / p)                      # ||sigma(t_m, y)||_{L^p} on the grid
    lam = solver.lam
    integral = 0.0
    for m in range(n):
        kern = (np.exp(-lam * (t - m * cfg.dt)) * ev) @ solver.phi     # G_{t - t_m}(x, y_grid)
        coef = solver.from_grid(kern * weight[m])
        integral += exp.gram.h_norm_sq(coef) * cfg.dt
    vals = np.concatenate(lhs_vals)
    meta = {"t": t, "x": _fmt(x), "mode": "monte_carlo", "heavy_tail": _kurtosis_flag(vals)}
    return MomentReport("pointwise", p, float(vals.mean()), _se(vals), pref * integral ** (p / 2),
                        exp.confidence, trials, meta)


# --------------------------------------------------------------------------
# supremum bounds


@dataclass
class SupStatistics:
    sup_conv_p: np.ndarray       # per trial: max over grid of |Z|^p
    sup_sigma_p: np.ndarray      # per trial: max over (s, y) of |sigma|^p
    int_sup_sigma_p: np.ndarray  # per trial: int_0^T sup_y |sigma(s, y)|^p ds
    sup_mean_sigma_p: float      # int_0^T sup_y E|sigma(s, y)|^p ds


def sup_statistics(exp: MomentExperiment) -> SupStatistics:
    cfg = exp.config
    trials = exp.trials
    p = exp.p
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    a0 = solver.initial_coefficients(exp.u0)
    sup_conv, sup_sig, int_sig = [], [], []
    mean_sig = np.zeros((cfg.steps, solver.phi.shape[1]))
    sig_c = exp.constant_sigma
    for i in range(0, trials, CHUNK):
        z = draw_normals(cfg.seed, range(i, min(i + CHUNK, trials)), cfg.steps, exp.gram.rank)
        b = z.shape[0]
        mc = np.zeros(b)
        ms = np.zeros(b)
        isg = np.zeros(b)
        for step, a, conv in solver.iterate(a0, z):
            mc = np.maximum(mc, np.max(np.abs(solver.to_grid(conv)), axis=1))
            if step < cfg.steps:
                if sig_c is None:
                    s = np.abs(exp.coeffs.sigma(solver.to_grid(a))) ** p
                    mean_sig[step] += s.sum(axis=0)
                    row = s.max(axis=1)
                else:
                    row = np.full(b, abs(sig_c) ** p)
                    mean_sig[step] += abs(sig_c) ** p * b
                ms = np.maximum(ms, row)
                isg += row * cfg.dt          # sigma frozen on [t_m, t_m + dt)
        sup_conv.append(mc**p)
        sup_sig.append(ms)
        int_sig.append(isg)
    sup_mean = float(np.sum(np.max(mean_sig / trials, axis=1)) * cfg.dt)
    return SupStatistics(np.concatenate(sup_conv), np.concatenate(sup_sig),
                         np.concatenate(int_sig), sup_mean)


def _se(vals: np.ndarray) -> float:
    return float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.inf


def _kurtosis_flag(vals: np.ndarray) -> bool:
    # p-th moment estimates with a heavy right tail: the top 1% carries
    # more than half of the mean
    if vals.size < 100:
        return True
    top = np.sort(vals)[-max(1, vals.size // 100):]
    return bool(top.sum() > 0.5 * vals.sum())


def _k_eta(exp: MomentExperiment) -> float:
    k = C.k_eta(exp.gram.measure)
    if not k.finite:
        raise ValueError("K_eta diverges for this measure and eta")
    return k.value


def verify_sup_moment(exp: MomentExperiment, stats: SupStatistics | None = None) -> MomentReport:
    """E sup |Z|^p <= C_{T,p,eta} int_0^T sup_y E|sigma(s, y)|^p ds for p above threshold."""
    cfg = exp.config
    m = exp.gram.measure
    d, eta = m.dimension, m.eta
    C.alpha_window(exp.p, d, eta)
    K = _k_eta(exp)
    stats = stats or sup_statistics(exp)
    log_c, alpha = C.log_c_T_p_eta(cfg.T, exp.p, eta, d, K)
    c = C._safe_exp(log_c)
    rhs = c * stats.sup_mean_sigma_p
    bound_rhs = C.c_T_p_eta_bound(cfg.T, exp.p, eta, d, K) * stats.sup_mean_sigma_p
    vals = stats.sup_conv_p
    return MomentReport("sup", exp.p, float(vals.mean()), _se(vals), rhs, exp.confidence,
                        vals.size, {"C": c, "alpha": alpha, "rhs_with_bound": bound_rhs,
                                    "heavy_tail": _kurtosis_flag(vals)})


def verify_sup_moment_small_p(exp: MomentExperiment, eps: float,
                              stats: SupStatistics | None = None) -> MomentReport:
    """E sup |Z|^p <= eps E sup|sigma|^p + C_{T,p,eta,eps} E int_0^T sup_y |sigma|^p ds."""
    cfg = exp.config
    m = exp.gram.measure
    d, eta = m.dimension, m.eta
    K = _k_eta(exp)
    log_c, q = C.log_c_T_p_eta_eps(cfg.T, exp.p, eta, eps, d, K)
    c = C._safe_exp(log_c)
    stats = stats or sup_statistics(exp)
    rhs = eps * float(stats.sup_sigma_p.mean()) + c * float(stats.int_sup_sigma_p.mean())
    vals = stats.sup_conv_p
    return MomentReport("sup_small_p", exp.p, float(vals.mean()), _se(vals), rhs, exp.confidence,
                        vals.size, {"C": c, "q": q, "eps": eps, "heavy_tail": _kurtosis_flag(vals)})


# --------------------------------------------------------------------------
# factorisation identity


def beta_quadrature(alpha: float, s: float, t: float, nodes: int = 64) -> float:
    """int_s^t (t-r)^(alpha-1) (r-s)^(-alpha) dr with graded substitutions at both ends.

    On the left half r - s = tau^(1/(1-alpha)) and on the right half
    t - r = tau^(1/alpha) remove the endpoint singularities.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (s + t)
    # left: (r-s)^-alpha dr = dtau / (1 - alpha)
    top = (mid - s) ** (1 - alpha)
    tau = 0.5 * top * (x + 1)
    r = s + tau ** (1 / (1 - alpha))
    left = np.sum(0.5 * top * w * (t - r) ** (alpha - 1)) / (1 - alpha)
    # right: (t-r)^(alpha-1) dr = dtau / alpha
    top = (t - mid) ** alpha
    tau = 0.5 * top * (x + 1)
    r = t - tau ** (1 / alpha)
    right = np.sum(0.5 * top * w * (r - s) ** (-alpha)) / alpha
    return float(left + right)


def _singular_panel(lam: float, h: float, alpha: float, nodes: int) -> float:
    # int_0^h u^(alpha-1) exp(-lam u) du by Gauss-Jacobi with the power as weight
    x, w = special.roots_jacobi(nodes, 0.0, alpha - 1.0)
    u = 0.5 * h * (x + 1)
    return float((0.5 * h) ** alpha * np.sum(w * np.exp(-lam * u)))


def _smoothing_weights(lam: float, t: float, grid: np.ndarray, alpha: float,
                       nodes: int = 16) -> np.ndarray:
    """w_j = int_{s_j}^{s_{j+1}} (t-s)^(alpha-1) exp(-lam (t-s)) ds.

    Regular panels use the incomplete gamma function.  The panel touching
    s = t carries the endpoint singularity; Gauss-Jacobi quadrature absorbs
    the power into its weight, and n and 2n nodes must agree.
    """
    hi = t - grid[:-1]
    lo = t - grid[1:]
    # below lam t ~ 1e-12 the exponential is 1 to working precision
    scale = special.gamma(alpha) * lam ** (-alpha) if lam * t > 1e-12 else None
    if scale is None:
        w = (hi**alpha - lo**alpha) / alpha
    else:
        # lower tails are accurate for small lam u, upper tails once it is large
        lower = special.gammainc(alpha, lam * hi) - special.gammainc(alpha, lam * lo)
        upper = special.gammaincc(alpha, lam * lo) - special.gammaincc(alpha, lam * hi)
        w = scale * np.where(lam * lo < 1.0, lower, upper)
    last = int(np.argmin(lo))
    coarse = _singular_panel(lam, hi[last], alpha, nodes)
    fine = _singular_panel(lam, hi[last], alpha, 2 * nodes)
    if abs(fine - coarse) > 1e-10 * max(1.0, abs(fine)):
        raise integrate.IntegrationWarning("singular panel of the smoothing kernel did not converge")
    w[last] = fine
    return w


def factorization_residual(config: SimulationConfig, gram: HGram, sigma: float, alpha: float,
                           t: float, x, normals: np.ndarray) -> float:
    """|J^{alpha-1}(J_alpha sigma)(t, x) - Z(t, x)| for one path of normals (steps, rank).

    J_alpha is the stochastic convolution against (s-r)^-alpha G_{s-r},
    sampled on the time grid with the same left-point noise convention as
    Z; the outer fractional integral treats it as piecewise constant (value
    at the right end of each step) and integrates the kernel exactly.
    """
    n = _step_index(config, t)
    if sigma == 0:
        return 0.0
    lam = _eigenvalues(config.n_modes, config.dimension)
    ev = _mode_values(config, x)
    dw = sigma * (normals[:n] @ gram.factor.T) * math.sqrt(config.dt)   # (n, size)
    grid = config.dt * np.arange(n + 1)
    lag = grid[1:, None] - grid[None, :n]                                 # s_j - t_m, j = 1..n
    mask = lag > 0
    pref = math.sin(math.pi * alpha) / math.pi
    direct = 0.0
    composed = 0.0
    for k in range(lam.size):
        if ev[k] == 0 or not np.any(dw[:, k]):
            continue
        direct += ev[k] * np.sum(np.exp(-lam[k] * (t - grid[:n])) * dw[:, k])
        kern = np.zeros_like(lag)
        kern[mask] = lag[mask] ** (-alpha) * np.exp(-lam[k] * lag[mask])
        y = kern @ dw[:, k]                                               # J_alpha at s_1..s_n
        wts = _smoothing_weights(lam[k], t, grid, alpha)
        composed += ev[k] * pref * np.dot(wts, y)
    return abs(composed - direct)


def factorization_check(config: SimulationConfig, gram: HGram, sigma: float, alpha: float,
                        t: float, x, rng: np.random.Generator) -> float:
    """Pathwise residual of the factorisation identity on one fresh noise path."""
    normals = rng.standard_normal((config.steps, gram.rank))
    return factorization_residual(config, gram, sigma, alpha, t, x, normals)


def coarsen_normals(normals: np.ndarray, factor: int) -> np.ndarray:
    """Aggregate standard normals over blocks of ``factor`` steps (same Brownian path)."""
    steps = normals.shape[-2]
    if steps % factor:
        raise ValueError("factor must divide the number of steps")
    shape = normals.shape[:-2] + (steps // factor, factor, normals.shape[-1])
    return normals.reshape(shape).sum(axis=-2) / math.sqrt(factor)


def factorization_study(gram: HGram, sigma: float, alpha: float, t: float, x,
                        dts=(4e-3, 2e-3, 1e-3), paths: int = 16, seed: int = 0,
                        n_modes: int | None = None) -> list[float]:
    """Mean pathwise residual at each dt, all levels sharing the finest Brownian paths."""
    dts = sorted(dts, reverse=True)
    fine = dts[-1]
    steps = int(round(t / fine))
    z = draw_normals(seed, range(paths), steps, gram.rank)
    out = []
    for dt in dts:
        f = int(round(dt / fine))
        cfg = SimulationConfig(gram.measure.dimension, n_modes or gram.n_modes,
                               2 * (n_modes or gram.n_modes), dt, t)
        zz = coarsen_normals(z, f)
        out.append(float(np.mean([factorization_residual(cfg, gram, sigma, alpha, t, x, zz[i])
                                  for i in range(paths)])))
    return out


def _fmt(x) -> str:
    return " ".join(f"{v:g}" for v in np.atleast_1d(x))


__all__ = [
    "MomentExperiment", "MomentReport", "SupStatistics", "beta_quadrature",
    "coarsen_normals", "convolution_sample", "convolution_samples", "convolution_variance",
    "factorization_check", "factorization_residual", "factorization_study", "gaussian_abs_moment",
    "kernel_h_norm_sq", "kernel_h_norm_sq_integral", "sup_statistics",
    "verify_pointwise_moment", "verify_sup_moment", "verify_sup_moment_small_p",
]
