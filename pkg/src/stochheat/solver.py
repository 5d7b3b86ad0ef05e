"""Spectral Galerkin simulation of the stochastic heat equation.

The field is carried by its sine coefficients ``a_k``.  One step of the
exponential Euler scheme reads

    a_k <- exp(-lam_k dt) * (a_k + dt * b_hat_k + s_hat_k)

with ``b_hat`` the sine transform of ``b(u)`` on the collocation grid and
``s_hat`` the transform of ``sigma(u) * dW``, where ``dW`` is the noise
increment expanded on the sine modes.  The linear part is therefore
integrated exactly; ``sigma`` and ``b`` are frozen at the left endpoint.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft

from .noise import HGram

BLOWUP = 1e12


class BlowUpError(FloatingPointError):
    def __init__(self, step: int, value: float):
        self.step = step
        super().__init__(f"coefficient magnitude {value:.3e} exceeded {BLOWUP:g} at step {step}")


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientSpec:
    """Nonlinearities with their declared Lipschitz constants and sigma bound.

    ``sigma_const`` / ``b_const`` are set when the function is a constant;
    the solver then skips the collocation round trip for that term.
    """

    sigma: Callable[[np.ndarray], np.ndarray]
    L_sigma: float
    K_sigma: float
    b: Callable[[np.ndarray], np.ndarray]
    L_b: float
    sigma_const: float | None = None
    b_const: float | None = None
    label: str = ""

    def spot_check(self, n: int = 2001, span: float = 10.0, slack: float = 1e-12) -> list[str]:
        """Violations of the declared constants on a dense sample of values."""
        v = np.linspace(-span, span, n)
        s, b = np.broadcast_to(self.sigma(v), v.shape), np.broadcast_to(self.b(v), v.shape)
        dv = np.diff(v)
        problems = []
        if np.max(np.abs(np.diff(s)) / dv) > self.L_sigma * (1 + 1e-9) + slack:
            problems.append(f"sigma exceeds declared Lipschitz constant {self.L_sigma}")
        if np.max(np.abs(np.diff(b)) / dv) > self.L_b * (1 + 1e-9) + slack:
            problems.append(f"b exceeds declared Lipschitz constant {self.L_b}")
        if np.max(np.abs(s)) > self.K_sigma + slack:
            problems.append(f"sigma exceeds declared bound {self.K_sigma}")
        return problems


def _const(c: float):
    return lambda v: np.full(np.shape(v), c, dtype=float)


_FUNC = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_function(text: str) -> tuple[Callable, float, float, float | None]:
    """Parse ``zero``, ``const(c)``, ``sin(a, w)``, ``tanh(a, w)``, ``linear(a)``.

    Returns (function, Lipschitz constant, sup-norm bound, constant value).
    """
    m = _FUNC.match(text)
    if not m:
        raise ValueError(f"cannot parse coefficient {text!r}")
    name = m.group(1)
    args = [float(a) for a in m.group(2).split(",")] if m.group(2) else []
    if name == "zero" and not args:
        return _const(0.0), 0.0, 0.0, 0.0
    if name == "const" and len(args) == 1:
        c = args[0]
        return _const(c), 0.0, abs(c), c
    if name in ("sin", "tanh") and 1 <= len(args) <= 2:
        amp, w = args[0], (args[1] if len(args) == 2 else 1.0)
        f = np.sin if name == "sin" else np.tanh
        return (lambda v: amp * f(w * np.asarray(v, dtype=float))), abs(amp * w), abs(amp), None
    if name == "linear" and len(args) == 1:
        a = args[0]
        return (lambda v: a * np.asarray(v, dtype=float)), abs(a), math.inf, None
    raise ValueError(f"unknown coefficient {text!r}")


def coefficients(sigma: str = "const(1)", b: str = "zero") -> CoefficientSpec:
    fs, ls, ks, cs = parse_function(sigma)
    fb, lb, _, cb = parse_function(b)
    return CoefficientSpec(fs, ls, ks, fb, lb, sigma_const=cs, b_const=cb,
                           label=f"sigma={sigma.strip()};b={b.strip()}")


# --------------------------------------------------------------------------
# configuration and grids


@dataclass(frozen=True)
class SimulationConfig:
    dimension: int
    n_modes: int
    grid_points: int
    dt: float
    T: float
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        if self.dimension not in (1, 2):
            errs.append(f"dimension must be 1 or 2, got {self.dimension}")
        if self.n_modes < 1:
            errs.append("n_modes must be >= 1")
        if self.grid_points < 2 * self.n_modes:
            errs.append(f"grid_points={self.grid_points} must be >= 2*n_modes={2 * self.n_modes}")
        if not (self.dt > 0 and self.T > 0):
            errs.append("dt and T must be positive")
        elif abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * (self.T / self.dt):
            errs.append(f"T/dt = {self.T / self.dt} must be an integer")
        if self.trials < 1:
            errs.append("trials must be >= 1")
        return errs

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def size(self) -> int:
        return self.n_modes**self.dimension

    def interior_grid(self) -> np.ndarray:
        return np.arange(1, self.grid_points + 1) / (self.grid_points + 1)

    def full_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_points + 2)

    def digest(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_mode_cutoff(dt: float, tol: float = 1e-14) -> int:
    """Per-axis N whose slowest-decaying dropped factor exp(-pi^2 N^2 dt) is below tol."""
    return max(1, math.ceil(math.sqrt(-math.log(tol) / (math.pi**2 * dt))))


def _eigenvalues(n: int, d: int) -> np.ndarray:
    lam = math.pi**2 * np.arange(1, n + 1, dtype=float) ** 2
    if d == 2:
        lam = (lam[:, None] + lam[None, :]).ravel()
    return lam


def _synthesis_matrix(n_modes: int, grid_points: int, d: int) -> np.ndarray:
    """Phi[k, m] = e_k(x_m) on the interior grid, row-major in k and m."""
    x = np.arange(1, grid_points + 1) / (grid_points + 1)
    k = np.arange(1, n_modes + 1)
    one = math.sqrt(2.0) * np.sin(math.pi * np.outer(k, x))
    if d == 1:
        return one
    return np.einsum("am,bn->abmn", one, one).reshape(n_modes**2, grid_points**2)


def project_initial(samples, n_modes: int | None = None) -> np.ndarray:
    """Sine coefficients of grid samples that include the boundary points.

    ``samples`` has M + 2 points per axis on the uniform grid of [0, 1]^d;
    the boundary values must vanish.  The DST-I of the interior recovers all
    M coefficients exactly; ``n_modes`` truncates the result per axis.
    """
    u = np.asarray(samples, dtype=float)
    d = u.ndim
    if d not in (1, 2):
        raise ValueError("samples must be a 1-d or 2-d grid")
    edge = [np.take(u, [0, -1], axis=ax) for ax in range(d)]
    if any(np.max(np.abs(e)) > 1e-12 for e in edge):
        raise ValueError("initial field must vanish on the boundary")
    inner = u[(slice(1, -1),) * d]
    M = inner.shape[0]
    coef = fft.dstn(inner, type=1) / (math.sqrt(2.0) * (M + 1)) ** d
    if n_modes is not None:
        coef = coef[(slice(0, n_modes),) * d]
    return coef


def synthesize(coeffs, grid_points: int) -> np.ndarray:
    """Inverse of :func:`project_initial` onto the full grid (boundary included)."""
    a = np.asarray(coeffs, dtype=float)
    d = a.ndim
    padded = np.zeros((grid_points,) * d)
    padded[tuple(slice(0, s) for s in a.shape)] = a
    inner = fft.dstn(padded, type=1) / math.sqrt(2.0) ** d
    return np.pad(inner, 1)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Deterministic Girsanov shift h(s) = sum_j c_j(s) e^_j, constant on each step.

    ``coefficients`` is (steps, rank) in the H-orthonormal basis built from
    the ordered Cholesky factor of the Gram matrix, so ||h(s)||_H^2 is the
    plain sum of squares of a row.
    """

    coefficients: np.ndarray
    dt: float

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2:
            raise ValueError("drift coefficients must be (steps, rank)")
        if not np.all(np.isfinite(c)):
            raise ValueError("drift coefficients must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def constant(cls, values, config: SimulationConfig, rank: int) -> "DriftSpec":
        v = np.zeros(rank)
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        if vals.size > rank:
            raise ValueError(f"{vals.size} drift components but the noise has rank {rank}")
        v[:vals.size] = vals
        return cls(np.tile(v, (config.steps, 1)), config.dt)

    @classmethod
    def zero(cls, config: SimulationConfig, rank: int) -> "DriftSpec":
        return cls(np.zeros((config.steps, rank)), config.dt)

    @property
    def steps(self) -> int:
        return self.coefficients.shape[0]

    @property
    def rank(self) -> int:
        return self.coefficients.shape[1]

    @property
    def T(self) -> float:
        return self.steps * self.dt

    def h_norm_sq(self) -> np.ndarray:
        return np.sum(self.coefficients**2, axis=1)

    def scaled(self, c: float) -> "DriftSpec":
        return DriftSpec(c * self.coefficients, self.dt)

    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def mode_coefficients(self, gram: HGram) -> np.ndarray:
        """Sine coefficients of the Riesz representer of h: row n is L c(t_n)."""
        return self.coefficients @ gram.factor.T


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution: sine coefficients per time step, grid field on demand."""

    config: SimulationConfig
    coeffs: np.ndarray  # (steps + 1, size)
    stream: int = 0
    _field: list = field(default_factory=list, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.config.times

    @property
    def field(self) -> np.ndarray:
        """Grid values (steps + 1, M + 2[, M + 2]) including zero boundary."""
        if not self._field:
            cfg = self.config
            phi = _synthesis_matrix(cfg.n_modes, cfg.grid_points, cfg.dimension)
            inner = self.coeffs @ phi
            shape = (inner.shape[0],) + (cfg.grid_points,) * cfg.dimension
            full = np.pad(inner.reshape(shape), [(0, 0)] + [(1, 1)] * cfg.dimension)
            full.setflags(write=False)
            self._field.append(full)
        return self._field[0]

    def save(self, path, stride: int = 1) -> None:
        save_trajectory(self, path, stride)

    def to_csv(self, path, stride: int = 1) -> None:
        export_csv(self, path, stride)


def sup_metric(t1: Trajectory | np.ndarray, t2: Trajectory | np.ndarray) -> float:
    f1 = t1.field if isinstance(t1, Trajectory) else np.asarray(t1)
    f2 = t2.field if isinstance(t2, Trajectory) else np.asarray(t2)
    if f1.shape != f2.shape:
        raise ValueError(f"grid mismatch: {f1.shape} vs {f2.shape}")
    if isinstance(t1, Trajectory) and isinstance(t2, Trajectory):
        if not np.array_equal(t1.times, t2.times):
            raise ValueError("time grids differ")
    return float(np.max(np.abs(f1 - f2)))


# --------------------------------------------------------------------------
# random streams


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for trial ``stream`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def draw_normals(seed: int, streams, steps: int, rank: int) -> np.ndarray:
    """Standard normals (len(streams), steps, rank), one stream per trial."""
    return np.stack([stream_rng(seed, s).standard_normal((steps, rank)) for s in streams])


# --------------------------------------------------------------------------
# the integrator


class GalerkinSolver:
    """Exponential Euler on the first N^d sine modes, vectorised over trials."""

    def __init__(self, config: SimulationConfig, gram: HGram, coeffs: CoefficientSpec):
        if gram.measure.dimension != config.dimension or gram.n_modes != config.n_modes:
            raise ValueError("Gram matrix does not match the simulation grid")
        self.config = config
        self.gram = gram
        self.coeffs = coeffs
        self.lam = _eigenvalues(config.n_modes, config.dimension)
        self.decay = np.exp(-self.lam * config.dt)
        self.phi = _synthesis_matrix(config.n_modes, config.grid_points, config.dimension)
        self.analysis = self.phi.T / (config.grid_points + 1) ** config.dimension
        self.factor = gram.factor

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        return a @ self.phi

    def from_grid(self, u: np.ndarray) -> np.ndarray:
        return u @ self.analysis

    def initial_coefficients(self, u0) -> np.ndarray:
        cfg = self.config
        if u0 is None:
            return np.zeros(cfg.size)
        if callable(u0):
            g = cfg.full_grid()
            pts = np.meshgrid(*([g] * cfg.dimension), indexing="ij")
            samples = np.asarray(u0(*pts), dtype=float)
            samples = np.broadcast_to(samples, (g.size,) * cfg.dimension)
            return project_initial(samples, cfg.n_modes).ravel()
        arr = np.asarray(u0, dtype=float)
        if arr.shape == (cfg.size,):
            return arr.copy()
        return project_initial(arr, cfg.n_modes).ravel()

    def iterate(self, a0, normals: np.ndarray, drift: np.ndarray | None = None,
                coupled: bool = False):
        """Yield the state after each step, starting with the initial one.

        ``normals`` is (batch, steps, rank).  ``drift`` (steps, rank) holds
        the H-orthonormal coordinates of the Girsanov shift h; it enters as
        dB -> dB + h dt.  Yields ``(n, a, conv)`` where ``conv`` is the
        stochastic-convolution part of ``a`` (noise and drift, no b, no u0);
        with ``coupled=True`` it yields ``(n, a_u, a_v)`` for the pair driven by
        the same normals, drift applied to the first only.
        """
        cfg = self.config
        batch, steps, rank = normals.shape
        if steps != cfg.steps or rank != self.gram.rank:
            raise ValueError(f"normals shape {normals.shape} does not match "
                             f"(*, {cfg.steps}, {self.gram.rank})")
        if drift is not None:
            drift = np.asarray(getattr(drift, "coefficients", drift), dtype=float)
            if drift.shape != (steps, rank):
                raise ValueError(f"drift shape {drift.shape} does not match ({steps}, {rank})")
        sq = math.sqrt(cfg.dt)
        a = np.broadcast_to(np.asarray(a0, dtype=float), (batch, cfg.size)).copy()
        other = a.copy() if coupled else np.zeros_like(a)
        yield 0, a, other
        for n in range(steps):
            dw = normals[:, n, :] * sq
            if coupled:
                shifted = dw if drift is None else dw + drift[n] * cfg.dt
                a = self._step(a, shifted @ self.factor.T)[0]
                other = self._step(other, dw @ self.factor.T)[0]
            else:
                if drift is not None:
                    dw = dw + drift[n] * cfg.dt
                a, s = self._step(a, dw @ self.factor.T)
                other = self.decay * (other + s)
            peak = float(np.max(np.abs(a)))
            if not peak <= BLOWUP or (coupled and not np.max(np.abs(other)) <= BLOWUP):
                raise BlowUpError(n + 1, peak)
            yield n + 1, a, other

    def _step(self, a: np.ndarray, dw_modes: np.ndarray):
        cs = self.coeffs
        if cs.sigma_const is not None:
            s = cs.sigma_const * dw_modes
            u = None
        else:
            u = self.to_grid(a)
            s = self.from_grid(cs.sigma(u) * self.to_grid(dw_modes))
        if cs.b_const is not None:
            if cs.b_const == 0.0:
                drift = 0.0
            else:
                drift = cs.b_const * self._const_projection()
        else:
            u = self.to_grid(a) if u is None else u
            drift = self.from_grid(cs.b(u))
        return self.decay * (a + self.config.dt * drift + s), s

    def _const_projection(self) -> np.ndarray:
        # exact sine coefficients of the constant 1 (odd modes only)
        from .noise import mode_means
        return mode_means(self.config.n_modes, self.config.dimension)

    def run(self, a0, normals: np.ndarray, drift=None) -> np.ndarray:
        """Full coefficient history (batch, steps + 1, size)."""
        out = np.empty((normals.shape[0], self.config.steps + 1, self.config.size))
        for n, a, _ in self.iterate(a0, normals, drift):
            out[:, n] = a
        return out

    def run_coupled(self, a0, normals: np.ndarray, drift) -> tuple[np.ndarray, np.ndarray]:
        shape = (normals.shape[0], self.config.steps + 1, self.config.size)
        u, v = np.empty(shape), np.empty(shape)
        for n, au, av in self.iterate(a0, normals, drift, coupled=True):
            u[:, n] = au
            v[:, n] = av
        return u, v


def simulate(config: SimulationConfig, gram: HGram, coeffs: CoefficientSpec, u0=None,
             stream: int = 0) -> Trajectory:
    """One trajectory on stream ``stream`` of the config's master seed."""
    solver = GalerkinSolver(config, gram, coeffs)
    z = draw_normals(config.seed, [stream], config.steps, gram.rank)
    hist = solver.run(solver.initial_coefficients(u0), z)
    return Trajectory(config, hist[0], stream)


def simulate_coupled(config: SimulationConfig, gram: HGram, coeffs: CoefficientSpec, u0,
                     drift, stream: int = 0) -> tuple[Trajectory, Trajectory]:
    """The pair (u, v) on one noise stream; only u feels the drift."""
    solver = GalerkinSolver(config, gram, coeffs)
    z = draw_normals(config.seed, [stream], config.steps, gram.rank)
    c = None if drift is None else np.asarray(getattr(drift, "coefficients", drift), dtype=float)
    u, v = solver.run_coupled(solver.initial_coefficients(u0), z, c)
    return Trajectory(config, u[0], stream), Trajectory(config, v[0], stream)


# --------------------------------------------------------------------------
# persistence

_TRAJ_MAGIC = b"SHETRAJ1"


def save_trajectory(traj: Trajectory, path, stride: int = 1) -> None:
    """Header (config digest, seed, stream, stride, shape) then row-major f8 snapshots."""
    snaps = np.ascontiguousarray(traj.field[::stride], dtype="<f8")
    header = json.dumps({"config": traj.config.digest(), "seed": traj.config.seed,
                         "stream": traj.stream, "stride": stride, "dt": traj.config.dt,
                         "shape": list(snaps.shape)}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_TRAJ_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(snaps.tobytes())


def load_trajectory(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(_TRAJ_MAGIC)) != _TRAJ_MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode())
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(header["shape"])
    return header, data


def export_csv(traj: Trajectory, path, stride: int = 1) -> None:
    cfg = traj.config
    g = cfg.full_grid()
    with open(path, "w") as fh:
        if cfg.dimension == 1:
            fh.write("t,x,u\n")
            for t, row in zip(traj.times[::stride], traj.field[::stride]):
                for x, val in zip(g, row):
                    fh.write(f"{t:.10g},{x:.10g},{val:.17g}\n")
        else:
            fh.write("t,x1,x2,u\n")
            for t, sheet in zip(traj.times[::stride], traj.field[::stride]):
                for i, x1 in enumerate(g):
                    for j, x2 in enumerate(g):
                        fh.write(f"{t:.10g},{x1:.10g},{x2:.10g},{sheet[i, j]:.17g}\n")
