"""Derivative-free fitting of scaling and coupling parameters to measured targets.

Every evaluation runs the scenario once per seed (common random numbers across
evaluations) and averages.  With one target the search bisects each free
parameter on the signed residual; with several it minimises the summed squared
relative residuals by golden-section search, one coordinate at a time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from ..analysis import measure_crossing
from ..errors import ConfigurationError
from .config import ExperimentConfig, KineticsConfig
from .scenarios import run_scenario

log = logging.getLogger(__name__)

__all__ = [
    "FREE_PARAMS",
    "TARGET_NAMES",
    "OBSERVABLES",
    "Target",
    "CalibrationReport",
    "apply_params",
    "current_params",
    "measure",
    "calibrate",
    "load_targets",
]

FREE_PARAMS = ("time_unit_s", "diffusion_u", "k_med", "sigma", "gate_prob")
TARGET_NAMES = ("t_full_s", "transfer_fraction", "n_oscillations")
OBSERVABLES = TARGET_NAMES + ("max_pathway_length",)
MIN_SEEDS = 5
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Target:
    """Ensemble-mean observable ``name`` should land within ``tolerance`` of ``value``."""

    name: str
    value: float
    tolerance: float

    def __post_init__(self):
        if self.name not in TARGET_NAMES:
            raise ConfigurationError(f"unknown target {self.name!r}; choose from {TARGET_NAMES}")
        if not self.tolerance > 0:
            raise ConfigurationError(f"target {self.name}: tolerance must be > 0")
        if self.value == 0:
            raise ConfigurationError(f"target {self.name}: value must be non-zero (residuals are relative)")


@dataclass
class CalibrationReport:
    params: dict
    measured: dict
    residuals: dict
    objective: float
    converged: bool
    n_evaluations: int
    iterations: int
    seeds: list
    history: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "params": {k: float(v) for k, v in self.params.items()},
            "measured": {k: (None if v is None else float(v)) for k, v in self.measured.items()},
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "objective": float(self.objective),
            "n_evaluations": self.n_evaluations,
            "iterations": self.iterations,
            "seeds": [int(s) for s in self.seeds],
            "history": [float(h) for h in self.history],
            "message": self.message,
        }


def current_params(cfg: ExperimentConfig, names: Sequence[str]) -> dict:
    kp = cfg.kinetics_params()
    values = {
        "time_unit_s": kp.time_unit_s,
        "diffusion_u": kp.diffusion_u,
        "k_med": cfg.coupling.k_median,
        "sigma": cfg.coupling.sigma,
        "gate_prob": cfg.coupling.gate_prob,
    }
    return {n: float(values[n]) for n in names}


def apply_params(cfg: ExperimentConfig, params: dict) -> ExperimentConfig:
    bad = sorted(set(params) - set(FREE_PARAMS))
    if bad:
        raise ConfigurationError(f"cannot calibrate {bad}; free parameters are {FREE_PARAMS}")
    kin = dict(cfg.kinetics.overrides)
    coup = {}
    for name, val in params.items():
        if name in ("time_unit_s", "diffusion_u"):
            kin[name] = float(val)
        elif name == "k_med":
            coup["k_median"] = float(val)
        else:
            coup[name] = float(val)
    return replace(cfg, kinetics=KineticsConfig(cfg.kinetics.preset, kin), coupling=replace(cfg.coupling, **coup))


def _seed_independent(cfg: ExperimentConfig) -> bool:
    """True when no random stream can influence the run (lone marble, fixed pacemaker)."""
    if cfg.scenario != "single":
        return False
    pm = cfg.pacemakers
    if not pm.enabled:
        return True
    lo, hi = pm.period_range
    return pm.phase_s is not None and pm.angle_deg is not None and lo == hi


def measure(cfg: ExperimentConfig, names: Sequence[str] = OBSERVABLES, seeds: Sequence[int] = (0,), *,
            threads: int = 1) -> dict:
    """Ensemble values of the requested observables over ``seeds``.

    ``t_full_s`` pools every complete wave of every run, ``max_pathway_length``
    is the longest pathway of any run and the rest are per-run means.  A value
    is ``None`` when no run produced it.
    """
    seeds = list(seeds)
    runs = [run_scenario(cfg.with_seed(seeds[0]), threads=threads)]
    if not _seed_independent(cfg):
        runs += [run_scenario(cfg.with_seed(s), threads=threads) for s in seeds[1:]]
    out = {}
    for name in names:
        if name == "t_full_s":
            vals = [c.t_full_s for r in runs for c in map(measure_crossing, r.oscillations)
                    if not c.partial and not c.degenerate]
            out[name] = float(np.mean(vals)) if vals else None
        elif name == "transfer_fraction":
            vals = [r.statistics["transfer_fraction"] for r in runs if r.statistics["transfer_fraction"] is not None]
            out[name] = float(np.mean(vals)) if vals else None
        elif name == "n_oscillations":
            out[name] = float(np.mean([r.statistics["n_oscillations"] for r in runs]))
        elif name == "max_pathway_length":
            out[name] = float(max(r.statistics["max_pathway_length"] for r in runs))
        else:
            raise ConfigurationError(f"unknown observable {name!r}; choose from {OBSERVABLES}")
    return out


class _BudgetExhausted(Exception):
    pass


def calibrate(cfg: ExperimentConfig, targets: Sequence[Target], free_params: Sequence[str], bounds: dict,
              budget: int = 30, seeds: Sequence[int] = tuple(range(MIN_SEEDS)), *, threads: int = 1,
              evaluator: Callable[[ExperimentConfig], dict] | None = None, max_sweeps: int = 3) -> CalibrationReport:
    """Fit ``free_params`` within ``bounds`` so the ensemble means meet ``targets``.

    ``budget`` caps the number of ensemble evaluations.  The returned report
    always carries the best parameters seen; ``converged`` is False when the
    budget ran out (or a target is out of reach) before every target was
    within its tolerance.  ``evaluator`` replaces the simulation (for tests).
    """
    targets = list(targets)
    free = list(free_params)
    seeds = [int(s) for s in seeds]
    if not targets:
        raise ConfigurationError("at least one target is required")
    if not free:
        raise ConfigurationError("at least one free parameter is required")
    bad = sorted(set(free) - set(FREE_PARAMS))
    if bad:
        raise ConfigurationError(f"cannot calibrate {bad}; free parameters are {FREE_PARAMS}")
    if len(set(seeds)) < MIN_SEEDS:
        raise ConfigurationError(f"calibration needs at least {MIN_SEEDS} distinct seeds, got {len(set(seeds))}")
    if budget < 1:
        raise ConfigurationError("budget must be >= 1")
    for name in free:
        if name not in bounds:
            raise ConfigurationError(f"missing bounds for {name}")
        lo, hi = bounds[name]
        if not lo < hi:
            raise ConfigurationError(f"bounds for {name} must satisfy low < high, got {bounds[name]}")

    measure_fn = evaluator or (lambda c: measure(c, OBSERVABLES, seeds, threads=threads))
    cache: dict = {}
    history: list[float] = []
    state = {"best": None, "iterations": 0}

    def objective(meas: dict) -> float:
        total = 0.0
        for t in targets:
            m = meas.get(t.name)
            total += 1.0 if m is None else ((m - t.value) / t.value) ** 2
        return total

    def ok(meas: dict) -> bool:
        return all(meas.get(t.name) is not None and abs(meas[t.name] - t.value) <= t.tolerance for t in targets)

    def evaluate(params: dict) -> dict:
        key = tuple(round(params[n], 12) for n in free)
        if key not in cache:
            if len(cache) >= budget:
                raise _BudgetExhausted
            meas = measure_fn(apply_params(cfg, params))
            cache[key] = meas
            obj = objective(meas)
            log.info("calibration eval %d: %s -> %s (objective %.4g)", len(cache), params, meas, obj)
            best = state["best"]
            if best is None or obj < best[2]:
                if best is not None and dict(best[0]) != params:
                    state["iterations"] += 1
                state["best"] = (dict(params), meas, obj)
            history.append(state["best"][2])
        return cache[key]

    def signed(meas: dict) -> float:
        m = meas.get(targets[0].name)
        # no complete wave at all counts as overshooting the target
        return math.inf if m is None else m - targets[0].value

    start = current_params(cfg, free)
    for name in free:
        lo, hi = bounds[name]
        start[name] = min(max(start[name], lo), hi)

    message = ""
    try:
        evaluate(start)
        for _ in range(max_sweeps):
            if ok(state["best"][1]):
                break
            before = state["best"][2]
            for name in free:
                if ok(state["best"][1]):
                    break
                base = dict(state["best"][0])
                lo, hi = bounds[name]
                if len(targets) == 1:
                    _bisect(name, base, lo, hi, evaluate, signed, targets[0].tolerance)
                else:
                    _golden(name, base, lo, hi, evaluate, objective, ok)
            if state["best"][2] >= before:
                break
    except _BudgetExhausted:
        message = f"budget of {budget} evaluations exhausted"

    params, meas, obj = state["best"]
    converged = ok(meas)
    if not converged and not message:
        message = "targets not reached within bounds"
    residuals = {t.name: (math.nan if meas.get(t.name) is None else (meas[t.name] - t.value) / t.value)
                 for t in targets}
    return CalibrationReport(params, meas, residuals, obj, converged, len(cache), state["iterations"], seeds,
                             history, message)


def _bisect(name, base, lo, hi, evaluate, signed, tol):
    """Bisection on the signed residual along one coordinate.

    The bracket is the current point plus whichever bound (lower first) shows
    the opposite sign, so a start close to the target costs one endpoint.
    """
    def at(x):
        p = dict(base)
        p[name] = x
        return signed(evaluate(p))

    x0 = base[name]
    f0 = at(x0)
    if abs(f0) <= tol:
        return
    bracket = None
    for end in (lo, hi):
        if end == x0:
            continue
        f_end = at(end)
        if abs(f_end) <= tol:
            return
        if (f_end > 0) != (f0 > 0):
            bracket = (min(x0, end), max(x0, end))
            break
    if bracket is None:
        log.info("calibration: %s cannot bracket the target within [%g, %g]", name, lo, hi)
        return
    lo, hi = bracket
    f_lo = at(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = at(mid)
        if abs(f_mid) <= tol:
            return
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid


def _golden(name, base, lo, hi, evaluate, objective, ok):
    """Golden-section minimisation of the objective along one coordinate."""
    def at(x):
        p = dict(base)
        p[name] = x
        meas = evaluate(p)
        return objective(meas), meas

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, mc = at(c)
    fd, md = at(d)
    while b - a > 1e-3 * (hi - lo):
        if ok(mc) or ok(md):
            return
        if fc <= fd:
            b, d, fd, md = d, c, fc, mc
            c = b - GOLDEN * (b - a)
            fc, mc = at(c)
        else:
            a, c, fc, mc = c, d, fd, md
            d = a + GOLDEN * (b - a)
            fd, md = at(d)


def load_targets(path) -> dict:
    """Read a targets file: ``targets``, ``free``, ``bounds`` and optional ``budget``/``seeds``."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read targets file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping")
    unknown = sorted(set(data) - {"targets", "free", "bounds", "budget", "seeds"})
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {unknown}")
    try:
        targets = [Target(**t) for t in data.get("targets") or []]
    except TypeError as exc:
        raise ConfigurationError(f"{path}: bad target entry: {exc}") from exc
    bounds = {k: tuple(float(x) for x in v) for k, v in (data.get("bounds") or {}).items()}
    out = {"targets": targets, "free_params": list(data.get("free") or []), "bounds": bounds}
    if "budget" in data:
        out["budget"] = int(data["budget"])
    if "seeds" in data:
        out["seeds"] = [int(s) for s in data["seeds"]]
    return out
