"""Seeded Monte Carlo engine and declarative experiment sweeps.

The engine turns (model, classifier, attack policy) into error frequencies
with reproducibility guarantees: noise comes from counter-based substreams
keyed by (seed, block), errors are integer counts per block, and merging
counts is order-independent, so results are byte-identical for any
`threads` setting. Common random numbers are shared across every sweep
point, classifier and attack mode within a run, which turns the paper-style
ordering comparisons into paired tests.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    METHOD_CLT_EXACT,
    METHOD_MONTE_CARLO,
    ErrorEstimate,
    clt_error,
    sigma_for_target_error,
)
from .attacks import heuristic_agnostic_attack
from .classifiers import ClassifierKind, build_classifier
from .model import (
    REJECT,
    AttackMode,
    AttackSpec,
    HypothesisModel,
    TwoLevelProfile,
)
from .rng import block_plan, noise_block

__all__ = [
    "CSV_HEADER",
    "TrialCounts",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "monte_carlo_error",
    "run_experiment",
]

CSV_HEADER = (
    "sweep_axis,sweep_value,classifier,attack_mode,kappa,error,ci,reject_rate,method,seed"
)

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass
class TrialCounts:
    """Integer tallies of one class-conditional simulation."""

    errors: int = 0
    rejects: int = 0
    trials: int = 0

    def merge(self, other: "TrialCounts") -> None:
        self.errors += other.errors
        self.rejects += other.rejects
        self.trials += other.trials

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials

    @property
    def reject_rate(self) -> float:
        return self.rejects / self.trials

    def ci_halfwidth(self) -> float:
        p = self.error_rate
        return _Z95 * math.sqrt(p * (1.0 - p) / self.trials)


def _attack_plan(model, classifier, spec: AttackSpec, true_class: int):
    """Reduce an AttackSpec to either a fixed vector or the aware procedure."""
    if spec.mode is AttackMode.NONE:
        return ("fixed", np.zeros(model.dim))
    if spec.mode is AttackMode.FIXED_VECTOR:
        return ("fixed", spec.vector)
    if spec.mode is AttackMode.NOISE_AGNOSTIC_HEURISTIC:
        result = heuristic_agnostic_attack(
            model, classifier.kind, true_class, spec.budget, spec.strength
        )
        return ("fixed", result.vector)
    if spec.mode is AttackMode.NOISE_AWARE_OPTIMAL:
        return ("aware", spec.strength)
    raise ValueError(f"unknown attack mode: {spec.mode}")


def _count_block(model, classifier, plan, true_class, z_block, sigma) -> TrialCounts:
    """Tally errors and rejects on one block of standard normal draws."""
    j = true_class
    base = model.means[j] + sigma * z_block
    rows = z_block.shape[0]
    if plan[0] == "fixed":
        labels = classifier.decide_batch(base + plan[1])
        wrong = labels != j
        rejected = labels == REJECT
        return TrialCounts(int(wrong.sum()), int(rejected.sum()), rows)

    # noise-aware: replay each binary sign attack; first flip wins, and
    # undecided trials fall back to the zero attack
    strength = plan[1]
    wrong = np.zeros(rows, dtype=bool)
    rejected = np.zeros(rows, dtype=bool)
    undecided = np.ones(rows, dtype=bool)
    for k in range(model.num_classes):
        if k == j:
            continue
        e = -strength * np.sign(model.means[j] - model.means[k])
        labels = classifier.decide_batch(base + e)
        flips = labels != j
        newly = flips & undecided
        rejected |= newly & (labels == REJECT)
        wrong |= flips
        undecided &= ~flips
    if undecided.any():
        labels = classifier.decide_batch(base[undecided])
        wrong[undecided] = labels != j
        rejected[undecided] = labels == REJECT
    return TrialCounts(int(wrong.sum()), int(rejected.sum()), rows)


def _conditional_counts(
    model, classifier, attack: AttackSpec, true_class: int, trials: int, seed: int,
    sigma: float | None = None, threads: int = 1,
) -> TrialCounts:
    sigma = model.sigma if sigma is None else sigma
    plan = _attack_plan(model, classifier, attack, true_class)

    def one(block_spec):
        b, _, rows = block_spec
        z = noise_block(seed, b, rows, model.dim)
        return _count_block(model, classifier, plan, true_class, z, sigma)

    total = TrialCounts()
    blocks = list(block_plan(trials))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for counts in pool.map(one, blocks):
                total.merge(counts)
    else:
        for spec in blocks:
            total.merge(one(spec))
    return total


def monte_carlo_error(
    model: HypothesisModel,
    classifier,
    attack: AttackSpec,
    true_class: int | None = None,
    trials: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> ErrorEstimate:
    """Empirical error frequency with a 95% confidence half-width.

    true_class picks a class-conditional error; None averages the
    class-conditional errors with the model's priors (all classes reuse
    the same noise draws).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if true_class is not None:
        counts = _conditional_counts(
            model, classifier, attack, model.check_class(true_class), trials, seed,
            threads=threads,
        )
        return ErrorEstimate(
            value=counts.error_rate,
            method=METHOD_MONTE_CARLO,
            ci_halfwidth=counts.ci_halfwidth(),
            trials=trials,
        )
    value = 0.0
    var = 0.0
    for j in range(model.num_classes):
        counts = _conditional_counts(
            model, classifier, attack, j, trials, seed, threads=threads
        )
        w = model.priors[j]
        value += w * counts.error_rate
        var += (w * counts.ci_halfwidth()) ** 2
    return ErrorEstimate(
        value=value, method=METHOD_MONTE_CARLO, ci_halfwidth=math.sqrt(var), trials=trials
    )


# --------------------------------------------------------------------------
# Declarative sweeps

SWEEP_KAPPA = "kappa"
SWEEP_EPS_OVER_SIGMA_SQ = "eps_over_sigma_sq"
SWEEP_DIMENSION = "dimension"

_VALID_AXES = (SWEEP_KAPPA, SWEEP_EPS_OVER_SIGMA_SQ, SWEEP_DIMENSION)


class ConfigError(ValueError):
    """Experiment configuration failed validation; message names the field."""


@dataclass
class ExperimentConfig:
    """Declarative description of one tabular experiment sweep.

    Exactly one of model / profile is set. For the dimension axis, profile
    is mandatory and the noise level is calibrated per dimension to hit
    target_error; otherwise sigma comes from the model or the explicit
    sigma field.
    """

    eps: float
    classifiers: list[ClassifierKind]
    attack_modes: list[AttackMode]
    sweep_axis: str
    sweep_values: list[float]
    trials: int = 100_000
    seed: int = 0
    model: HypothesisModel | None = None
    profile: TwoLevelProfile | None = None
    sigma: float | None = None
    kappas: list[float] = field(default_factory=lambda: [None])
    true_class: int | None = None
    target_error: float | None = None
    calibration_method: str = METHOD_CLT_EXACT

    def validate(self) -> None:
        if (self.model is None) == (self.profile is None):
            raise ConfigError("model/profile: exactly one must be given")
        if self.sweep_axis not in _VALID_AXES:
            raise ConfigError(f"sweep.axis: must be one of {_VALID_AXES}, got {self.sweep_axis!r}")
        if not self.sweep_values:
            raise ConfigError("sweep.values: must be non-empty")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")
        if not self.classifiers:
            raise ConfigError("classifiers: must be non-empty")
        if not self.attack_modes:
            raise ConfigError("attack_modes: must be non-empty")
        if self.eps < 0:
            raise ConfigError(f"eps: must be >= 0, got {self.eps}")
        if self.sweep_axis == SWEEP_DIMENSION:
            if self.profile is None:
                raise ConfigError("sweep.axis=dimension requires a profile, not a model")
            if self.target_error is None:
                raise ConfigError("sweep.axis=dimension requires target_error")
            if any(int(v) != v or v < 1 for v in self.sweep_values):
                raise ConfigError("sweep.values: dimensions must be positive integers")
        elif self.model is None and self.sigma is None and self.sweep_axis != SWEEP_EPS_OVER_SIGMA_SQ:
            raise ConfigError("sigma: required when sweeping a profile over kappa")
        for kappa in self.kappas:
            if kappa is not None and not 0 <= kappa <= self.eps + 1e-12:
                raise ConfigError(f"kappas: each must lie in [0, eps], got {kappa}")

    def resolved_model(self) -> HypothesisModel:
        if self.model is not None:
            return self.model
        assert self.profile is not None
        return self.profile.to_model(self.sigma if self.sigma is not None else 1.0)

    def to_dict(self) -> dict:
        d: dict = {
            "eps": self.eps,
            "classifiers": [c.value for c in self.classifiers],
            "attack_modes": [m.value for m in self.attack_modes],
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)},
            "trials": self.trials,
            "seed": self.seed,
        }
        if self.model is not None:
            d["model"] = {
                "means": self.model.means.tolist(),
                "sigma": self.model.sigma,
                "priors": self.model.priors.tolist(),
            }
        if self.profile is not None:
            p = self.profile
            d["profile"] = {"d": p.d, "p": p.p, "a": p.a, "b": p.b, "eps": p.eps}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if any(k is not None for k in self.kappas):
            d["kappas"] = list(self.kappas)
        if self.true_class is not None:
            d["true_class"] = self.true_class
        if self.target_error is not None:
            d["target_error"] = self.target_error
            d["calibration_method"] = self.calibration_method
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        return _config_from_dict(raw)


@dataclass
class ExperimentResult:
    """Sweep output: one row per (sweep point, classifier, attack mode, kappa)."""

    rows: list[dict]
    metadata: dict

    def write_csv(self, stream) -> None:
        stream.write(CSV_HEADER + "\n")
        for row in self.rows:
            stream.write(format_row(row) + "\n")

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": self.rows}, indent=2)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def format_row(row: dict) -> str:
    return ",".join(
        _fmt(row[key])
        for key in (
            "sweep_axis", "sweep_value", "classifier", "attack_mode", "kappa",
            "error", "ci", "reject_rate", "method", "seed",
        )
    )


def _make_row(config, sweep_value, kind, mode, kappa, **fields) -> dict:
    row = {
        "sweep_axis": config.sweep_axis,
        "sweep_value": sweep_value,
        "classifier": kind.value,
        "attack_mode": mode.value if mode is not None else "",
        "kappa": kappa,
        "error": None,
        "ci": None,
        "reject_rate": None,
        "method": METHOD_MONTE_CARLO,
        "seed": config.seed,
    }
    row.update(fields)
    return row


def run_experiment(config: ExperimentConfig, threads: int = 1, row_sink=None) -> ExperimentResult:
    """Execute a sweep. Deterministic for a given (config, seed).

    row_sink, if given, receives each row as soon as it is final, so
    partial results of long sweeps survive interruption. Sweep points of a
    dimension study finish one at a time; shared-noise sweeps accumulate
    all cells jointly (common random numbers) and emit at the end.
    """
    config.validate()
    if config.sweep_axis == SWEEP_DIMENSION:
        rows = _run_dimension_sweep(config, threads, row_sink)
    else:
        rows = _run_shared_noise_sweep(config, threads)
        if row_sink is not None:
            for row in rows:
                row_sink(row)
    metadata = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "trials": config.trials,
    }
    return ExperimentResult(rows=rows, metadata=metadata)


def _cells_for(config) -> list[tuple]:
    """(sweep_value, kind, mode, kappa) grid, kappa resolved per axis."""
    cells = []
    for value in config.sweep_values:
        for kind in config.classifiers:
            for mode in config.attack_modes:
                if config.sweep_axis == SWEEP_KAPPA:
                    kappa_list = [value]
                else:
                    kappa_list = [k if k is not None else config.eps for k in config.kappas]
                for kappa in kappa_list:
                    if mode is AttackMode.NONE:
                        kappa = 0.0
                    cells.append((value, kind, mode, kappa))
    # NONE mode ignores kappa; drop duplicate cells it would create
    seen = set()
    out = []
    for cell in cells:
        if cell in seen:
            continue
        seen.add(cell)
        out.append(cell)
    return out


def _run_shared_noise_sweep(config, threads) -> list[dict]:
    """kappa / eps_over_sigma_sq sweeps: every cell shares the same draws."""
    model = config.resolved_model()
    classifiers = {kind: build_classifier(kind, model, config.eps) for kind in config.classifiers}
    cells = _cells_for(config)
    true_classes = (
        [config.true_class] if config.true_class is not None else list(range(model.num_classes))
    )

    def sigma_for(value) -> float:
        if config.sweep_axis == SWEEP_EPS_OVER_SIGMA_SQ:
            if value <= 0:
                raise ConfigError(f"sweep.values: (eps/sigma)^2 must be > 0, got {value}")
            return config.eps / math.sqrt(value)
        return model.sigma

    # fixed attack vectors are reused across blocks; aware plans are cheap
    plans = {}
    for value, kind, mode, kappa in cells:
        for j in true_classes:
            spec = _spec_for(config.eps, mode, kappa)
            plans[(value, kind, mode, kappa, j)] = _attack_plan(
                model, classifiers[kind], spec, j
            )

    def run_block(block_spec):
        b, _, rows = block_spec
        z = noise_block(config.seed, b, rows, model.dim)
        tallies = {}
        for key, plan in plans.items():
            value, kind, _, _, j = key
            tallies[key] = _count_block(
                model, classifiers[kind], plan, j, z, sigma_for(value)
            )
        return tallies

    totals = {key: TrialCounts() for key in plans}
    blocks = list(block_plan(config.trials))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for tallies in pool.map(run_block, blocks):
                for key, counts in tallies.items():
                    totals[key].merge(counts)
    else:
        for spec in blocks:
            for key, counts in run_block(spec).items():
                totals[key].merge(counts)

    rows = []
    for value, kind, mode, kappa in cells:
        err = 0.0
        rej = 0.0
        var = 0.0
        for j in true_classes:
            counts = totals[(value, kind, mode, kappa, j)]
            w = 1.0 if config.true_class is not None else float(model.priors[j])
            err += w * counts.error_rate
            rej += w * counts.reject_rate
            var += (w * counts.ci_halfwidth()) ** 2
        rows.append(
            _make_row(
                config, value, kind, mode, kappa,
                error=err, ci=math.sqrt(var),
                reject_rate=rej if kind is ClassifierKind.PAIRWISE_ROBUST_LINEAR else None,
            )
        )
    return rows


def _spec_for(eps: float, mode: AttackMode, kappa: float) -> AttackSpec:
    if mode is AttackMode.NONE:
        return AttackSpec.none()
    return AttackSpec(budget=eps, strength=kappa, mode=mode)


def _run_dimension_sweep(config, threads, row_sink=None) -> list[dict]:
    """Convergence study: per-dimension noise calibration, then MC vs CLT."""
    rows = []

    def emit(row):
        rows.append(row)
        if row_sink is not None:
            row_sink(row)

    kappa = config.kappas[0] if config.kappas[0] is not None else config.eps
    for value in config.sweep_values:
        d = int(value)
        profile = config.profile.with_dimension(d)
        sigma = sigma_for_target_error(
            profile, kappa, config.target_error,
            method=config.calibration_method, seed=config.seed,
        )
        model = profile.to_model(sigma)
        for kind in config.classifiers:
            classifier = build_classifier(kind, model, config.eps)
            for mode in config.attack_modes:
                spec = _spec_for(config.eps, mode, kappa)
                est = monte_carlo_error(
                    model, classifier, spec,
                    true_class=config.true_class, trials=config.trials,
                    seed=config.seed, threads=threads,
                )
                emit(
                    _make_row(
                        config, d, kind, mode, kappa,
                        error=est.value, ci=est.ci_halfwidth,
                    )
                )
            if kind is ClassifierKind.GLRT:
                # the analytic estimate models the agnostic sign attack
                pred = clt_error(model, config.eps, kappa)
                emit(
                    _make_row(
                        config, d, kind, AttackMode.NOISE_AGNOSTIC_HEURISTIC, kappa,
                        error=pred.value, method=METHOD_CLT_EXACT,
                    )
                )
    return rows


def _config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    known = {
        "model", "profile", "sigma", "eps", "classifiers", "attack_modes",
        "kappas", "sweep", "trials", "seed", "true_class", "target_error",
        "calibration_method",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config: unknown fields {sorted(unknown)}")

    def need(name):
        if name not in raw:
            raise ConfigError(f"{name}: required field is missing")
        return raw[name]

    model = None
    profile = None
    if "model" in raw:
        m = raw["model"]
        try:
            model = HypothesisModel(
                means=np.asarray(m["means"], dtype=float),
                sigma=float(m["sigma"]),
                priors=np.asarray(m["priors"], dtype=float) if "priors" in m else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc
    if "profile" in raw:
        p = raw["profile"]
        try:
            profile = TwoLevelProfile(
                d=int(p["d"]), p=float(p["p"]), a=float(p["a"]),
                b=float(p["b"]), eps=float(p["eps"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"profile: {exc}") from exc

    try:
        classifiers = [ClassifierKind(c) for c in need("classifiers")]
    except ValueError as exc:
        raise ConfigError(f"classifiers: {exc}") from exc
    try:
        modes = [AttackMode(m) for m in raw.get("attack_modes", ["agnostic"])]
    except ValueError as exc:
        raise ConfigError(f"attack_modes: {exc}") from exc

    sweep = need("sweep")
    if not isinstance(sweep, dict) or "axis" not in sweep or "values" not in sweep:
        raise ConfigError("sweep: expected an object with 'axis' and 'values'")

    config = ExperimentConfig(
        eps=float(need("eps")),
        classifiers=classifiers,
        attack_modes=modes,
        sweep_axis=str(sweep["axis"]),
        sweep_values=[float(v) for v in sweep["values"]],
        trials=int(raw.get("trials", 100_000)),
        seed=int(raw.get("seed", 0)),
        model=model,
        profile=profile,
        sigma=float(raw["sigma"]) if "sigma" in raw else None,
        kappas=list(raw.get("kappas", [None])),
        true_class=int(raw["true_class"]) if raw.get("true_class") is not None else None,
        target_error=float(raw["target_error"]) if "target_error" in raw else None,
        calibration_method=str(raw.get("calibration_method", METHOD_CLT_EXACT)),
    )
    config.validate()
    return config
