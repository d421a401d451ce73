"""Decision rules: minimum distance, GLRT, minimax linear, pairwise robust linear.

All classifiers are immutable after construction and classification is pure,
so instances can be shared freely across threads. Batch entry points
(`costs_batch`, `decide_batch`) take an (n, d) array of observations and are
what the Monte Carlo engine drives; `classify` wraps a single observation
into a Decision with surfaced costs. Ties always resolve to the lowest class
index, which keeps golden tests deterministic and is measure-zero under
continuous noise.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .model import REJECT, Decision, HypothesisModel, pairwise_half_difference
from .numerics import relu_complement

__all__ = [
    "ClassifierKind",
    "LinearRule",
    "minimax_linear_rule",
    "MinDistanceClassifier",
    "GlrtClassifier",
    "MinimaxLinearClassifier",
    "PairwiseRobustLinearClassifier",
    "build_classifier",
    "per_coordinate_cost_difference",
]


class ClassifierKind(enum.Enum):
    MIN_DISTANCE = "min-distance"
    MINIMAX_LINEAR = "minimax"
    GLRT = "glrt"
    PAIRWISE_ROBUST_LINEAR = "prl"


@dataclass(frozen=True)
class LinearRule:
    """Affine statistic w^T x + b for one binary test; decide the first class
    of the pair when the statistic is positive.

    degenerate means the soft threshold nulled every coordinate of the
    separation vector: the statistic is identically 0 and the rule always
    falls back to the lower-indexed class. That is a risk-1/2 rule and is
    flagged rather than hidden.
    """

    weight: np.ndarray
    offset: float

    @property
    def degenerate(self) -> bool:
        return bool(np.all(self.weight == 0.0))

    def statistic(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.weight + self.offset


def minimax_linear_rule(model: HypothesisModel, j: int, k: int, eps: float) -> LinearRule:
    """Robust linear rule for the binary subproblem j-vs-k.

    The weight soft-thresholds the half-difference of the means at eps,
    discarding coordinates whose sign the adversary could flip and
    shrinking the rest; the offset recentres at the midpoint. Positive
    statistic favors class j.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    half_diff = pairwise_half_difference(model, j, k)
    weight = np.sign(half_diff) * np.maximum(0.0, np.abs(half_diff) - eps)
    midpoint = (model.means[j] + model.means[k]) / 2.0
    return LinearRule(weight=weight, offset=float(-weight @ midpoint))


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class MinDistanceClassifier:
    """Nearest-mean rule, optimal without an adversary."""

    kind = ClassifierKind.MIN_DISTANCE

    def __init__(self, model: HypothesisModel):
        self.model = model

    def costs_batch(self, x) -> np.ndarray:
        xb, _ = _as_batch(x)
        diff = xb[:, None, :] - self.model.means[None, :, :]
        return np.einsum("nkd,nkd->nk", diff, diff)

    def decide_batch(self, x) -> np.ndarray:
        return np.argmin(self.costs_batch(x), axis=1)

    def classify(self, x) -> Decision:
        costs = self.costs_batch(x)[0]
        return Decision(label=int(np.argmin(costs)), costs=costs)


class GlrtClassifier:
    """Joint estimation of class and perturbation under an l-infinity budget.

    Under hypothesis k the most favorable in-budget perturbation is the
    clipped residual f_eps(x - mu_k); plugging it back in leaves the cost
    ||g_eps(x - mu_k)||^2, a minimum-distance rule with each coordinate
    difference passed through the double-sided ReLU. eps = 0 recovers the
    plain minimum distance classifier.
    """

    kind = ClassifierKind.GLRT

    def __init__(self, model: HypothesisModel, eps: float):
        if eps < 0:
            raise ValueError(f"eps must be >= 0, got {eps}")
        self.model = model
        self.eps = float(eps)

    def estimate_perturbation(self, x, k: int) -> np.ndarray:
        """Most favorable in-budget perturbation under hypothesis k."""
        k = self.model.check_class(k)
        x = np.asarray(x, dtype=float)
        return relu_complement(x - self.model.means[k], self.eps)

    def cost(self, x, k: int) -> float:
        k = self.model.check_class(k)
        x = np.asarray(x, dtype=float)
        resid = np.maximum(0.0, np.abs(x - self.model.means[k]) - self.eps)
        return float(resid @ resid)

    def costs_batch(self, x) -> np.ndarray:
        xb, _ = _as_batch(x)
        resid = np.maximum(0.0, np.abs(xb[:, None, :] - self.model.means[None, :, :]) - self.eps)
        return np.einsum("nkd,nkd->nk", resid, resid)

    def decide_batch(self, x) -> np.ndarray:
        return np.argmin(self.costs_batch(x), axis=1)

    def classify(self, x) -> Decision:
        costs = self.costs_batch(x)[0]
        return Decision(label=int(np.argmin(costs)), costs=costs)


class MinimaxLinearClassifier:
    """Binary robust linear rule; the worst-case-optimal defense for
    symmetric binary Gaussian instances."""

    kind = ClassifierKind.MINIMAX_LINEAR

    def __init__(self, model: HypothesisModel, eps: float):
        if model.num_classes != 2:
            raise ValueError(
                f"the minimax linear rule is binary; got {model.num_classes} classes "
                "(use the pairwise robust linear classifier for M > 2)"
            )
        self.model = model
        self.eps = float(eps)
        self.rule = minimax_linear_rule(model, 0, 1, eps)

    @property
    def degenerate(self) -> bool:
        return self.rule.degenerate

    def decide_batch(self, x) -> np.ndarray:
        xb, _ = _as_batch(x)
        s = self.rule.statistic(xb)
        # statistic > 0 decides class 0; a tie at exactly 0 also goes to 0
        return (s < 0).astype(np.int64)

    def classify(self, x) -> Decision:
        s = float(self.rule.statistic(np.asarray(x, dtype=float)))
        label = 0 if s >= 0 else 1
        return Decision(label=label, costs=np.array([-s, s]))


class PairwiseRobustLinearClassifier:
    """All-pairs extension of the binary minimax rule.

    Class k is declared only when it strictly wins every one of its M-1
    binary tests; a statistic of exactly 0 is a win for neither side.
    Anything short of a clear winner is a REJECT, which risk estimates
    score as an error.
    """

    kind = ClassifierKind.PAIRWISE_ROBUST_LINEAR

    def __init__(self, model: HypothesisModel, eps: float):
        self.model = model
        self.eps = float(eps)
        self.rules: dict[tuple[int, int], LinearRule] = {
            (j, k): minimax_linear_rule(model, j, k, eps)
            for j, k in itertools.combinations(range(model.num_classes), 2)
        }

    def pairwise_statistics(self, x) -> dict[tuple[int, int], float | np.ndarray]:
        """Oriented statistics s_{jk}; positive favors j over k."""
        xb, single = _as_batch(x)
        out = {}
        for pair, rule in self.rules.items():
            s = rule.statistic(xb)
            out[pair] = float(s[0]) if single else s
        return out

    def decide_batch(self, x) -> np.ndarray:
        xb, _ = _as_batch(x)
        m = self.model.num_classes
        wins = np.ones((xb.shape[0], m), dtype=bool)
        for (j, k), rule in self.rules.items():
            s = rule.statistic(xb)
            wins[:, j] &= s > 0
            wins[:, k] &= s < 0
        labels = np.full(xb.shape[0], REJECT, dtype=np.int64)
        winner_exists = wins.any(axis=1)
        # at most one class can win all of its tests
        labels[winner_exists] = np.argmax(wins[winner_exists], axis=1)
        return labels

    def classify(self, x) -> Decision:
        label = int(self.decide_batch(np.asarray(x, dtype=float))[0])
        return Decision(label=label, costs=None)


def build_classifier(kind: ClassifierKind, model: HypothesisModel, eps: float):
    if kind is ClassifierKind.MIN_DISTANCE:
        return MinDistanceClassifier(model)
    if kind is ClassifierKind.GLRT:
        return GlrtClassifier(model, eps)
    if kind is ClassifierKind.MINIMAX_LINEAR:
        return MinimaxLinearClassifier(model, eps)
    if kind is ClassifierKind.PAIRWISE_ROBUST_LINEAR:
        return PairwiseRobustLinearClassifier(model, eps)
    raise ValueError(f"unknown classifier kind: {kind}")


def per_coordinate_cost_difference(mu, noise, attack, eps: float):
    """Single-coordinate GLRT cost difference under the true hypothesis.

    For a symmetric binary pair with coordinate mean mu, attack value e and
    noise value n, the wrong-class cost minus the true-class cost is
    g_eps(2 mu + e + n)^2 - g_eps(e + n)^2. Monotone non-decreasing in e
    where mu >= 0 and non-increasing where mu < 0, which is what makes the
    full-budget sign attack worst-case. Broadcasts over array inputs.
    """
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(attack, dtype=float) + np.asarray(noise, dtype=float)
    wrong = np.maximum(0.0, np.abs(2.0 * mu + v) - eps)
    true = np.maximum(0.0, np.abs(v) - eps)
    out = wrong * wrong - true * true
    return float(out) if out.ndim == 0 else out
