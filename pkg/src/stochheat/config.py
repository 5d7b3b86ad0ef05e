"""Experiment configuration: a flat INI document, validated up front.

Every section and key is optional; missing values take the defaults
below.  Unknown sections and keys are errors, and validation reports every
violated precondition of the selected suites rather than stopping at the
first one.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field

from . import constants as C
from .noise import SpectralMeasure
from .solver import CoefficientSpec, SimulationConfig, coefficients

SUITES = ("constants", "simulate", "verify-moments", "verify-t2", "couple")

DEFAULTS: dict[str, dict[str, str]] = {
    "experiment": {"suites": "constants", "seed": "0", "trials": "1000", "out": "out"},
    "measure": {"kind": "point_mass", "dimension": "1", "eta": "0.0", "kappa": "",
                "radius": "", "table_radii": "", "table_values": ""},
    "solver": {"n_modes": "16", "grid_points": "32", "dt": "0.002", "T": "1.0", "stride": "10"},
    "coefficients": {"sigma": "const(1)", "b": "zero", "u0": "zero"},
    "constants": {"p": "8", "p_small": "2", "eps": ""},
    "moments": {"p": "6", "p_small": "2", "p_pointwise": "2", "eps": "0.16666666666666666",
                "t": "0.5", "x": "0.5", "alpha": "0.3", "factor_dts": "0.004, 0.002, 0.001",
                "factor_paths": "16", "confidence": "4"},
    "drift": {"components": "1.0"},
    "transport": {"n_samples": "256", "confidence": "4", "dump_costs": "false"},
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def initial_condition(spec: str, dimension: int):
    """u0 as a callable on grid points: ``zero``, ``sine(a)`` or ``eigen(k)``."""
    import numpy as np

    s = spec.replace(" ", "")
    if s == "zero":
        return None
    name, _, rest = s.partition("(")
    if not rest.endswith(")"):
        raise ValueError(f"cannot parse initial condition {spec!r}")
    arg = float(rest[:-1])
    if name == "sine":
        return lambda *xs: arg * np.prod([np.sin(np.pi * x) for x in xs], axis=0)
    if name == "eigen":
        k = int(arg)
        if k != arg or k < 1:
            raise ValueError("eigen(k) needs a positive integer k")
        return lambda *xs: np.prod([np.sqrt(2.0) * np.sin(np.pi * k * x) for x in xs], axis=0)
    raise ValueError(f"unknown initial condition {spec!r}")


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, str]]
    source: str | None = None
    measure: SpectralMeasure | None = field(default=None, repr=False)
    simulation: SimulationConfig | None = field(default=None, repr=False)
    coeffs: CoefficientSpec | None = field(default=None, repr=False)

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def getf(self, section: str, key: str) -> float:
        return float(self.values[section][key])

    def geti(self, section: str, key: str) -> int:
        return int(self.values[section][key])

    @property
    def suites(self) -> list[str]:
        return [s.strip() for s in self.get("experiment", "suites").split(",") if s.strip()]

    @property
    def seed(self) -> int:
        return self.geti("experiment", "seed")

    @property
    def trials(self) -> int:
        return self.geti("experiment", "trials")

    @property
    def out(self) -> str:
        return self.get("experiment", "out")

    def u0(self):
        return initial_condition(self.get("coefficients", "u0"), self.measure.dimension)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with ``section.key`` style overrides, revalidated."""
        vals = {s: dict(v) for s, v in self.values.items()}
        for k, v in kw.items():
            if v is None:
                continue
            sec, _, key = k.partition(".")
            vals[sec][key] = str(v)
        return validate(vals, self.source)

    def canonical(self) -> str:
        """Resolved settings as sorted JSON; the output directory is excluded."""
        vals = {s: dict(v) for s, v in self.values.items()}
        vals["experiment"].pop("out", None)
        return json.dumps(vals, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def echo(self) -> str:
        lines = []
        for sec in DEFAULTS:
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in self.values[sec].items()]
        return "\n".join(lines) + "\n"


def _build_measure(v: dict[str, str], errs: list[str]) -> SpectralMeasure | None:
    try:
        kind = v["kind"].strip()
        d = int(v["dimension"])
        eta = float(v["eta"])
        if kind == "riesz":
            if not v["kappa"]:
                errs.append("measure: riesz needs kappa")
                return None
            return SpectralMeasure.riesz(float(v["kappa"]), d, eta)
        if kind == "point_mass":
            return SpectralMeasure.point_mass(d, eta)
        if kind == "ball_uniform":
            if not v["radius"]:
                errs.append("measure: ball_uniform needs radius")
                return None
            return SpectralMeasure.ball_uniform(float(v["radius"]), d, eta)
        if kind == "tabulated":
            return SpectralMeasure.tabulated(_floats(v["table_radii"]), _floats(v["table_values"]),
                                             d, eta)
        errs.append(f"measure: unknown kind {kind!r}")
    except ValueError as exc:
        errs.append(f"measure: {exc}")
    return None


def _check(errs: list[str], section: str, fn):
    try:
        return fn()
    except (ValueError, KeyError) as exc:
        errs.append(f"{section}: {exc}")
        return None


def validate(values: dict[str, dict[str, str]], source: str | None = None) -> ExperimentConfig:
    errs: list[str] = []
    cfg = ExperimentConfig(values, source)
    suites = _check(errs, "experiment", lambda: cfg.suites) or []
    for s in suites:
        if s not in SUITES:
            errs.append(f"experiment: unknown suite {s!r} (choose from {', '.join(SUITES)})")
    seed = _check(errs, "experiment", lambda: cfg.seed)
    if seed is not None and not 0 <= seed < 2**64:
        errs.append("experiment: seed must be an unsigned 64-bit integer")
    trials = _check(errs, "experiment", lambda: cfg.trials)

    cfg.measure = m = _build_measure(values["measure"], errs)
    sv = values["solver"]
    sim = _check(errs, "solver", lambda: dict(
        dimension=int(values["measure"]["dimension"]), n_modes=int(sv["n_modes"]),
        grid_points=int(sv["grid_points"]), dt=float(sv["dt"]), T=float(sv["T"]),
        trials=max(1, trials or 1), seed=seed or 0))
    if sim is not None:
        try:
            cfg.simulation = SimulationConfig(**sim)
        except ValueError as exc:
            errs += [f"solver: {p}" for p in str(exc).split("; ")]
    stride = _check(errs, "solver", lambda: int(sv["stride"]))
    if stride is not None and stride < 1:
        errs.append("solver: stride must be >= 1")

    cv = values["coefficients"]
    cfg.coeffs = _check(errs, "coefficients", lambda: coefficients(cv["sigma"], cv["b"]))
    _check(errs, "coefficients", lambda: initial_condition(cv["u0"], 1))

    # the moment thresholds only need d and eta, so check them even when the
    # measure itself is invalid
    d, eta = (m.dimension, m.eta) if m else (_raw_int(values, "dimension"), _raw_eta(values))
    shape_ok = d in (1, 2) and eta is not None and 0 <= eta < 1
    need_k = any(s in suites for s in ("constants", "verify-moments", "verify-t2", "couple"))
    if m is not None and need_k:
        ke = C.k_eta(m)
        if not ke.finite:
            errs.append(f"measure: K_eta diverges for {m.descriptor()}")

    if "constants" in suites and shape_ok:
        cs = values["constants"]
        p = _check(errs, "constants", lambda: float(cs["p"]))
        if p is not None:
            _check(errs, "constants", lambda: C.alpha_window(p, d, eta))
        ps = _check(errs, "constants", lambda: float(cs["p_small"]))
        if ps is not None:
            thr = (4 + d) / (1 - eta)
            if not 0 < ps <= thr:
                errs.append(f"constants: p_small must lie in (0, {thr:g}], the threshold "
                            f"(4+d)/(1-eta) = {thr:g}")
        if cs["eps"]:
            e = _check(errs, "constants", lambda: float(cs["eps"]))
            if e is not None and not e > 0:
                errs.append("constants: eps must be positive")

    if "verify-moments" in suites and shape_ok:
        _validate_moments(values["moments"], cfg, d, eta, trials, errs)

    if any(s in suites for s in ("verify-t2", "couple")):
        _validate_transport(values, cfg, trials, suites, errs)

    if errs:
        raise ConfigError(errs)
    return cfg


def _raw_int(values, key):
    try:
        return int(values["measure"][key])
    except ValueError:
        return None


def _raw_eta(values):
    try:
        return float(values["measure"]["eta"])
    except ValueError:
        return None


def _validate_moments(mv, cfg, d, eta, trials, errs):
    thr = (4 + d) / (1 - eta)
    p = _check(errs, "moments", lambda: float(mv["p"]))
    if p is not None and not p > thr:
        errs.append(f"moments: p = {p:g} must exceed the threshold (4+d)/(1-eta) = {thr:g}")
    ps = _check(errs, "moments", lambda: float(mv["p_small"]))
    if ps is not None and not 0 < ps <= thr:
        errs.append(f"moments: p_small = {ps:g} must lie in (0, {thr:g}]")
    pp = _check(errs, "moments", lambda: float(mv["p_pointwise"]))
    if pp is not None and pp < 2:
        errs.append("moments: p_pointwise must be >= 2")
    e = _check(errs, "moments", lambda: float(mv["eps"]))
    if e is not None and not e > 0:
        errs.append("moments: eps must be positive")
    if trials is not None and trials < 1000:
        errs.append(f"moments: need at least 1000 trials, got {trials}")
    alpha = _check(errs, "moments", lambda: float(mv["alpha"]))
    if alpha is not None and p is not None and p > thr:
        lo, hi = C.alpha_window(p, d, eta)
        if not lo < alpha < hi:
            errs.append(f"moments: alpha = {alpha:g} outside the window ({lo:g}, {hi:g})")
    x = _check(errs, "moments", lambda: _floats(mv["x"]))
    if x is not None and (len(x) != d or any(not 0 <= v <= 1 for v in x)):
        errs.append(f"moments: x needs {d} coordinate(s) in [0, 1]")
    t = _check(errs, "moments", lambda: float(mv["t"]))
    sim = cfg.simulation
    if t is not None and sim is not None:
        n = round(t / sim.dt)
        if not (0 < t <= sim.T and abs(n * sim.dt - t) <= 1e-9 * t):
            errs.append(f"moments: t = {t:g} is not a positive point of the time grid")
    dts = _check(errs, "moments", lambda: _floats(mv["factor_dts"]))
    if dts is not None and t is not None:
        fine = min(dts) if dts else 0
        if len(dts) < 3 or fine <= 0:
            errs.append("moments: factor_dts needs three or more positive steps")
        else:
            for v in dts:
                r = v / fine
                if abs(r - round(r)) > 1e-9 or abs(t / v - round(t / v)) > 1e-9 * t / v:
                    errs.append(f"moments: factor step {v:g} must be a multiple of {fine:g} "
                                f"dividing t")
    fp = _check(errs, "moments", lambda: int(mv["factor_paths"]))
    if fp is not None and fp < 1:
        errs.append("moments: factor_paths must be >= 1")
    _check(errs, "moments", lambda: float(mv["confidence"]))


def _validate_transport(values, cfg, trials, suites, errs):
    tv = values["transport"]
    if trials is not None and trials < 100:
        errs.append(f"transport: need at least 100 coupled pairs, got {trials}")
    n = _check(errs, "transport", lambda: int(tv["n_samples"]))
    if n is not None and not 1 <= n <= 512:
        errs.append(f"transport: n_samples = {n} must lie in [1, 512]")
    comps = _check(errs, "drift", lambda: _floats(values["drift"]["components"]))
    sim = cfg.simulation
    if comps is not None and sim is not None and len(comps) > sim.size:
        errs.append(f"drift: {len(comps)} components exceed the {sim.size} retained modes")
    if comps is not None and any(not math.isfinite(c) for c in comps):
        errs.append("drift: components must be finite")
    _check(errs, "transport", lambda: float(tv["confidence"]))
    if tv["dump_costs"].strip().lower() not in ("true", "false", "yes", "no", "1", "0"):
        errs.append("transport: dump_costs must be a boolean")
    cs = cfg.coeffs
    if cs is not None:
        if not cs.K_sigma > 0 or not math.isfinite(cs.K_sigma):
            errs.append("coefficients: sigma needs a finite positive bound K_sigma")
        if not math.isfinite(cs.L_b):
            errs.append("coefficients: b needs a finite Lipschitz constant")


def defaults() -> dict[str, dict[str, str]]:
    return {s: dict(v) for s, v in DEFAULTS.items()}


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    values = defaults()
    errs = []
    for sec in parser.sections():
        if sec not in values:
            errs.append(f"unknown section [{sec}]")
            continue
        for key, val in parser.items(sec):
            if key not in values[sec]:
                errs.append(f"unknown key {key!r} in [{sec}]")
            else:
                values[sec][key] = val.strip()
    try:
        cfg = validate(values, source)
    except ConfigError as exc:
        errs += exc.problems
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


__all__ = ["ConfigError", "DEFAULTS", "ExperimentConfig", "SUITES", "defaults",
           "initial_condition", "load_config", "parse_config", "validate"]
