"""Run the selected suites of a validated configuration and write the results.

Outputs in the run directory:

    manifest.txt      key = value lines, byte-identical across re-runs
    timing.txt        wall-clock per suite (kept out of the manifest)
    <suite>.csv       one table per suite
    *.bin             trajectories in the solver's binary format

Per-trial noise comes from SeedSequence(seed, spawn_key=(trial,)); every
suite restarts the trial counter, and suites never share generator state.
"""

from __future__ import annotations

import csv
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import constants as C
from . import moments as Mo
from . import transport as Tr
from .config import ExperimentConfig, _floats
from .noise import build_gram
from .solver import DriftSpec, export_csv, save_trajectory, simulate, simulate_coupled

STREAM_SCHEME = "numpy SeedSequence(seed, spawn_key=(trial,)) -> PCG64"


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: dict = field(default_factory=dict)
    error: str | None = None
    seconds: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    suites: list[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        out = [f"config_hash = {self.config_hash}", f"code_version = {self.code_version}",
               f"seed = {self.seed}", f"streams = {STREAM_SCHEME}",
               f"passed = {_fmt(self.passed)}"]
        for s in self.suites:
            out.append(f"{s.name}.passed = {_fmt(s.passed)}")
            for k in sorted(s.summary):
                if k == "passed":
                    continue
                out.append(f"{s.name}.{k} = {_fmt(s.summary[k])}")
            if s.error:
                out.append(f"{s.name}.error = {s.error}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) if k in r else "" for k in keys])


# --------------------------------------------------------------------------
# suites


def _suite_constants(cfg: ExperimentConfig, out: Path) -> SuiteResult:
    cs = cfg.coeffs
    eps = cfg.get("constants", "eps")
    rep = C.constants_report(cfg.measure, cfg.simulation.T, cfg.getf("constants", "p"),
                             p_small=cfg.getf("constants", "p_small"),
                             eps=float(eps) if eps else None, L_sigma=cs.L_sigma, L_b=cs.L_b,
                             K_sigma=cs.K_sigma if cs.K_sigma > 0 else 1.0)
    write_csv(out / "constants.csv", [{"name": k, "value": v} for k, v in rep.rows()])
    passed = rep.C_Tpeta <= rep.C_Tpeta_bound
    return SuiteResult("constants", passed, {
        "C_Tpeta": rep.C_Tpeta, "C_Tpeta_bound": rep.C_Tpeta_bound, "alpha_star": rep.alpha_star,
        "C_Tpetaeps": rep.C_Tpetaeps, "C_GTeta": rep.C_GTeta, "K_eta": rep.K_eta,
        "log_theorem_C": rep.log_theorem_C})


def _suite_simulate(cfg: ExperimentConfig, out: Path, gram) -> SuiteResult:
    stride = cfg.geti("solver", "stride")
    traj = simulate(cfg.simulation, gram, cfg.coeffs, cfg.u0(), stream=0)
    save_trajectory(traj, out / "trajectory.bin", stride)
    export_csv(traj, out / "trajectory.csv", stride)
    f = traj.field
    return SuiteResult("simulate", bool(np.all(np.isfinite(f))), {
        "sup_abs_u": float(np.max(np.abs(f))), "final_grid_l2": float(np.sqrt(np.mean(f[-1] ** 2)))})


def _suite_moments(cfg: ExperimentConfig, out: Path, gram) -> SuiteResult:
    sim = cfg.simulation
    mv = cfg.values["moments"]
    conf = float(mv["confidence"])
    u0 = cfg.u0()
    t = float(mv["t"])
    x = _floats(mv["x"])
    x = x[0] if len(x) == 1 else np.array(x)
    rows, summary = [], {}

    def exp(p):
        return Mo.MomentExperiment(p, sim, gram, cfg.coeffs, u0=u0, confidence=conf)

    reports = [
        Mo.verify_pointwise_moment(exp(float(mv["p_pointwise"])), t, x),
        Mo.verify_sup_moment(exp(float(mv["p"]))),
        Mo.verify_sup_moment_small_p(exp(float(mv["p_small"])), float(mv["eps"])),
    ]
    for r in reports:
        rows.append({"check": r.bound, **r.row()})
        summary[f"{r.bound}_lhs"] = r.lhs
        summary[f"{r.bound}_rhs"] = r.rhs
        summary[f"{r.bound}_passed"] = r.passed
    passed = all(r.passed for r in reports)

    sig = cfg.coeffs.sigma_const
    if sig is not None:
        dts = sorted(_floats(mv["factor_dts"]), reverse=True)
        alpha = float(mv["alpha"])
        res = Mo.factorization_study(gram, sig, alpha, t, x, dts=dts,
                                     paths=int(mv["factor_paths"]), seed=cfg.seed)
        monotone = all(b < a for a, b in zip(res, res[1:])) or sig == 0
        beta = Mo.beta_quadrature(alpha, 0.0, 1.0)
        beta_err = abs(beta - math.pi / math.sin(math.pi * alpha))
        for dt, r in zip(dts, res):
            rows.append({"check": "factorization", "dt": dt, "residual": r})
        rows.append({"check": "beta_integral", "value": beta, "error": beta_err})
        summary.update({"factorization_residuals": " ".join(repr(r) for r in res),
                        "factorization_monotone": monotone, "beta_error": beta_err})
        passed = passed and monotone and beta_err < 1e-6
    else:
        summary["factorization"] = "skipped (sigma not constant)"
    write_csv(out / "moments.csv", rows)
    return SuiteResult("verify-moments", passed, summary)


def _transport_experiment(cfg: ExperimentConfig, gram) -> Tr.TransportExperiment:
    comps = _floats(cfg.get("drift", "components"))
    drift = DriftSpec.constant(comps, cfg.simulation, gram.rank)
    return Tr.TransportExperiment(cfg.simulation, gram, cfg.coeffs, drift, u0=cfg.u0(),
                                  n_samples=cfg.geti("transport", "n_samples"),
                                  confidence=cfg.getf("transport", "confidence"))


def _suite_t2(cfg: ExperimentConfig, out: Path, gram) -> SuiteResult:
    exp = _transport_experiment(cfg, gram)
    dump = cfg.get("transport", "dump_costs").strip().lower() in ("true", "yes", "1")
    rep = Tr.verify_t2(exp, cost_path=out / "costs.csv" if dump else None)
    rows = [{"check": "t2", **rep.row()}]
    passed = rep.passed
    summary = rep.row()
    if cfg.coeffs.L_sigma == 0 and cfg.coeffs.sigma_const is not None and cfg.coeffs.b_const is not None:
        chain = Tr.additive_chain(exp)
        rows.append({"check": "additive_chain", "coupling": chain.coupling, "bound_2CH": chain.bound,
                     "passed": chain.passed})
        summary.update({"additive_coupling": chain.coupling, "additive_bound": chain.bound})
        passed = passed and chain.passed
    write_csv(out / "transport.csv", rows)
    return SuiteResult("verify-t2", passed, summary)


def _suite_couple(cfg: ExperimentConfig, out: Path, gram) -> SuiteResult:
    exp = _transport_experiment(cfg, gram)
    est = Tr.coupling_bound(exp)
    H = Tr.entropy_of_drift(exp.drift, cfg.simulation.T)
    log_c = exp.log_constant()
    bound = 0.0 if H == 0 else 2 * C._safe_exp(log_c) * H
    passed = est.mean <= bound + exp.confidence * est.se
    u, v = simulate_coupled(cfg.simulation, gram, cfg.coeffs, cfg.u0(), exp.drift, stream=0)
    stride = cfg.geti("solver", "stride")
    save_trajectory(u, out / "coupled_u.bin", stride)
    save_trajectory(v, out / "coupled_v.bin", stride)
    row = {"coupling_mean": est.mean, "coupling_se": est.se, "entropy": H, "log_C": log_c,
           "bound_2CH": bound, "trials": exp.trials, "passed": passed}
    write_csv(out / "couple.csv", [row])
    return SuiteResult("couple", passed, row)


# --------------------------------------------------------------------------


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> RunManifest:
    """Execute every selected suite; component errors are recorded, not raised."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.echo())
    results = []
    gram = None
    for name in cfg.suites:
        start = time.perf_counter()
        try:
            if name == "constants":
                res = _suite_constants(cfg, out)
            else:
                if gram is None:
                    gram = build_gram(cfg.measure, cfg.simulation.n_modes)
                res = {"simulate": _suite_simulate, "verify-moments": _suite_moments,
                       "verify-t2": _suite_t2, "couple": _suite_couple}[name](cfg, out, gram)
        except Exception as exc:  # recorded with context in the manifest
            where = traceback.extract_tb(exc.__traceback__)[-1]
            res = SuiteResult(name, False,
                              error=f"{type(exc).__name__}: {exc} ({Path(where.filename).name}:{where.lineno})")
        res.seconds = time.perf_counter() - start
        results.append(res)
    manifest = RunManifest(cfg.digest(), __version__, cfg.seed, results)
    (out / "manifest.txt").write_text(manifest.text())
    (out / "timing.txt").write_text("".join(f"{r.name} = {r.seconds:.3f}\n" for r in results))
    return manifest


__all__ = ["RunManifest", "STREAM_SCHEME", "SuiteResult", "run", "write_csv"]
