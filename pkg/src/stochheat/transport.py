"""Empirical check of the T2 inequality W_2^2(Q, P) <= 2 C H(Q | P).

Q is the law of the solution u driven by the shifted noise dB + h dt and P
the law of v driven by dB alone.  With h deterministic the relative entropy
is known exactly, the pair (u, v) on a common noise path is one transport
plan, and the empirical W_2 between independent samples of the two laws is
an exact assignment problem under the uniform metric on paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import constants as C
from .noise import HGram
from .solver import (CoefficientSpec, DriftSpec, GalerkinSolver, SimulationConfig, Trajectory,
                     draw_normals)

W2_CAP = 512
MIN_TRIALS = 100
CHUNK = 256


@dataclass
class TransportExperiment:
    config: SimulationConfig
    gram: HGram
    coeffs: CoefficientSpec
    drift: DriftSpec
    u0: object = None
    trials: int | None = None
    n_samples: int = 256
    confidence: float = 4.0
    cap: int = W2_CAP

    def __post_init__(self):
        if self.trials is None:
            self.trials = self.config.trials
        errs = []
        if self.trials < MIN_TRIALS:
            errs.append(f"need at least {MIN_TRIALS} coupled pairs, got {self.trials}")
        if self.drift.steps != self.config.steps or abs(self.drift.dt - self.config.dt) > 1e-15:
            errs.append("drift is not piecewise constant on the solver time grid")
        if self.drift.rank != self.gram.rank:
            errs.append(f"drift rank {self.drift.rank} differs from noise rank {self.gram.rank}")
        if not 1 <= self.n_samples <= self.cap:
            errs.append(f"n_samples must lie in [1, {self.cap}]")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def k_eta(self) -> float:
        k = C.k_eta(self.gram.measure)
        if not k.finite:
            raise ValueError("K_eta diverges for this measure")
        return k.value

    def log_constant(self) -> float:
        m = self.gram.measure
        return C.log_theorem_constant(self.config.T, self.coeffs.L_sigma, self.coeffs.L_b,
                                      self.coeffs.K_sigma, m.eta, self.k_eta, m.dimension)


# --------------------------------------------------------------------------
# entropy


def entropy_of_drift(drift: DriftSpec, T: float | None = None) -> float:
    """H(Q | P) = 1/2 int_0^T ||h(s)||_H^2 ds, exact for piecewise-constant h."""
    if T is not None and abs(drift.T - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"drift covers [0, {drift.T}], not [0, {T}]")
    return 0.5 * float(np.sum(drift.h_norm_sq())) * drift.dt


# --------------------------------------------------------------------------
# Wasserstein distance between empirical path measures


def _as_paths(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        arr = np.stack([s.field if isinstance(s, Trajectory) else np.asarray(s) for s in samples])
    return arr.reshape(arr.shape[0], -1)


def cost_matrix(samples_a, samples_b) -> np.ndarray:
    """Squared uniform distances sup_{t,x} |a_i - b_j|^2."""
    a, b = _as_paths(samples_a), _as_paths(samples_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples live on different grids")
    cost = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        cost[i] = np.max(np.abs(b - a[i]), axis=1) ** 2
    return cost


@dataclass
class Assignment:
    value: float           # mean matched cost = W_2^2 of the empirical measures
    matched: np.ndarray    # cost of each matched pair
    columns: np.ndarray

    @property
    def se(self) -> float:
        n = self.matched.size
        return float(self.matched.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def optimal_assignment(cost: np.ndarray, cap: int = W2_CAP) -> Assignment:
    n, m = cost.shape
    if n != m:
        raise ValueError("empirical measures need equal sample counts")
    if n > cap:
        raise ValueError(f"{n} samples exceed the assignment cap {cap}")
    rows, cols = optimize.linear_sum_assignment(cost)
    matched = cost[rows, cols]
    return Assignment(float(np.mean(matched)), matched, cols)


def empirical_w2(samples_a, samples_b, cap: int = W2_CAP) -> float:
    """W_2^2 between the uniform empirical measures on two equal-size path samples."""
    n_a = len(samples_a)
    if n_a != len(samples_b):
        raise ValueError("empirical measures need equal sample counts")
    if n_a > cap:
        raise ValueError(f"{n_a} samples exceed the assignment cap {cap}")
    return optimal_assignment(cost_matrix(samples_a, samples_b), cap).value


def save_cost_matrix(cost: np.ndarray, path) -> None:
    np.savetxt(path, cost, delimiter=",", fmt="%.17g")


# --------------------------------------------------------------------------
# coupling


@dataclass
class CouplingEstimate:
    mean: float
    se: float
    values: np.ndarray     # sup |u - v|^2 per pair


def _coupled_batches(exp: TransportExperiment, streams):
    cfg = exp.config
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    a0 = solver.initial_coefficients(exp.u0)
    streams = list(streams)
    for i in range(0, len(streams), CHUNK):
        z = draw_normals(cfg.seed, streams[i:i + CHUNK], cfg.steps, exp.gram.rank)
        yield solver, solver.iterate(a0, z, exp.drift.coefficients, coupled=True)


def coupling_bound(exp: TransportExperiment, streams=None) -> CouplingEstimate:
    """Monte Carlo E sup_{t, x} |u - v|^2 over coupled pairs on common noise."""
    streams = range(exp.trials) if streams is None else streams
    if exp.drift.is_zero():
        n = len(list(streams))
        return CouplingEstimate(0.0, 0.0, np.zeros(n))
    out = []
    for solver, it in _coupled_batches(exp, streams):
        best = None
        for _, au, av in it:
            diff = np.max(np.abs(solver.to_grid(au - av)), axis=1)
            best = diff if best is None else np.maximum(best, diff)
        out.append(best**2)
    vals = np.concatenate(out)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return CouplingEstimate(float(vals.mean()), se, vals)


def _path_samples(exp: TransportExperiment, streams, coupled: bool):
    """Grid histories (n, steps + 1, M^d): (u, v) pairs, or plain v paths."""
    cfg = exp.config
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    a0 = solver.initial_coefficients(exp.u0)
    streams = list(streams)
    shape = (len(streams), cfg.steps + 1, solver.phi.shape[1])
    u = np.empty(shape)
    v = np.empty(shape) if coupled else None
    for i in range(0, len(streams), CHUNK):
        sl = slice(i, min(i + CHUNK, len(streams)))
        z = draw_normals(cfg.seed, streams[sl], cfg.steps, exp.gram.rank)
        if coupled:
            for n, au, av in solver.iterate(a0, z, exp.drift.coefficients, coupled=True):
                u[sl, n] = solver.to_grid(au)
                v[sl, n] = solver.to_grid(av)
        else:
            for n, a, _ in solver.iterate(a0, z):
                u[sl, n] = solver.to_grid(a)
    return (u, v) if coupled else u


# --------------------------------------------------------------------------
# additive noise: everything is deterministic


def additive_difference(exp: TransportExperiment) -> np.ndarray:
    """u - v on the grid at every step when sigma is constant and b does not see u.

    The noise cancels, so the difference solves the linear recursion
    d <- exp(-lam dt) (d + sigma L c(t_n) dt).
    """
    sig = exp.coeffs.sigma_const
    if sig is None or exp.coeffs.b_const is None:
        raise ValueError("closed-form difference needs constant sigma and constant b")
    cfg = exp.config
    solver = GalerkinSolver(cfg, exp.gram, exp.coeffs)
    forcing = exp.drift.mode_coefficients(exp.gram) * (sig * cfg.dt)
    d = np.zeros(cfg.size)
    out = np.empty((cfg.steps + 1, solver.phi.shape[1]))
    out[0] = 0.0
    for n in range(cfg.steps):
        d = solver.decay * (d + forcing[n])
        out[n + 1] = solver.to_grid(d)
    return out


@dataclass
class AdditiveChain:
    coupling: float     # sup |u - v|^2, deterministic
    bound: float        # 6 K_sigma^2 C_G int ||h||^2 = 2 C H
    constant: float
    entropy: float

    @property
    def passed(self) -> bool:
        return self.coupling <= self.bound


def additive_chain(exp: TransportExperiment) -> AdditiveChain:
    if exp.coeffs.L_sigma != 0:
        raise ValueError("the additive chain needs L_sigma = 0")
    diff = additive_difference(exp)
    H = entropy_of_drift(exp.drift, exp.config.T)
    c = C._safe_exp(exp.log_constant())
    return AdditiveChain(float(np.max(np.abs(diff)) ** 2), 2 * c * H, c, H)


# --------------------------------------------------------------------------
# full report


@dataclass
class TransportReport:
    entropy: float
    coupling_mean: float
    coupling_se: float
    w2: float
    w2_se: float
    w2_paired: float
    paired_mean: float
    constant: float
    log_constant: float
    n_samples: int
    trials: int
    confidence: float

    @property
    def bound(self) -> float:
        """2 C H, with 0 for zero entropy even when C overflows."""
        return 0.0 if self.entropy == 0 else 2 * self.constant * self.entropy

    def _log_ratio(self, x: float) -> float:
        if self.entropy == 0 or x == 0:
            return -math.inf if x == 0 else math.inf
        return math.log(x) - math.log(2 * self.entropy) - self.log_constant

    @property
    def w2_ratio(self) -> float:
        return math.exp(self._log_ratio(self.w2))

    @property
    def coupling_ratio(self) -> float:
        return math.exp(self._log_ratio(self.coupling_mean))

    @property
    def degenerate(self) -> bool:
        return self.entropy == 0

    @property
    def vacuous(self) -> bool:
        """The constant overflowed double precision, so the bound holds trivially."""
        return not math.isfinite(self.constant)

    @property
    def w2_passed(self) -> bool:
        return self.w2 <= self.bound + self.confidence * self.w2_se

    @property
    def coupling_passed(self) -> bool:
        return self.coupling_mean <= self.bound + self.confidence * self.coupling_se

    @property
    def admissible(self) -> bool:
        return self.w2_paired <= self.paired_mean + 1e-9 * max(1.0, self.paired_mean)

    @property
    def passed(self) -> bool:
        return self.w2_passed and self.coupling_passed and self.admissible

    def row(self) -> dict:
        return {"entropy": self.entropy, "coupling_mean": self.coupling_mean,
                "coupling_se": self.coupling_se, "w2": self.w2, "w2_se": self.w2_se,
                "w2_paired": self.w2_paired, "paired_mean": self.paired_mean,
                "C": self.constant, "log_C": self.log_constant, "bound_2CH": self.bound,
                "log_w2_ratio": self._log_ratio(self.w2),
                "log_coupling_ratio": self._log_ratio(self.coupling_mean),
                "n_samples": self.n_samples, "trials": self.trials,
                "w2_passed": self.w2_passed, "coupling_passed": self.coupling_passed,
                "admissible": self.admissible, "degenerate": self.degenerate,
                "vacuous": self.vacuous, "passed": self.passed}


def verify_t2(exp: TransportExperiment, cost_path=None) -> TransportReport:
    """Entropy (exact), coupling (Monte Carlo) and empirical W_2^2 against 2 C H.

    u-samples come from streams 0..n-1 and v-samples from the disjoint
    streams n..2n-1, so the two clouds are independent draws of Q and P.
    The paired W_2^2 between u_i and v_i of the same stream checks that the
    assignment never beats the coupling plan.
    """
    n = exp.n_samples
    H = entropy_of_drift(exp.drift, exp.config.T)
    coupling = coupling_bound(exp)
    u, v_paired = _path_samples(exp, range(n), coupled=True)
    v = _path_samples(exp, range(n, 2 * n), coupled=False)
    cost = cost_matrix(u, v)
    if cost_path is not None:
        save_cost_matrix(cost, cost_path)
    indep = optimal_assignment(cost, exp.cap)
    paired_cost = cost_matrix(u, v_paired)
    paired = optimal_assignment(paired_cost, exp.cap)
    log_c = exp.log_constant()
    return TransportReport(
        entropy=H, coupling_mean=coupling.mean, coupling_se=coupling.se,
        w2=indep.value, w2_se=indep.se, w2_paired=paired.value,
        paired_mean=float(np.mean(np.diag(paired_cost))),
        constant=C._safe_exp(log_c), log_constant=log_c,
        n_samples=n, trials=exp.trials, confidence=exp.confidence)


__all__ = [
    "AdditiveChain", "Assignment", "CouplingEstimate", "TransportExperiment",
    "TransportReport", "additive_chain", "additive_difference", "cost_matrix",
    "coupling_bound", "empirical_w2", "entropy_of_drift", "optimal_assignment",
    "save_cost_matrix", "verify_t2",
]
