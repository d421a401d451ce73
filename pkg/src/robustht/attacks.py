"""Adversary constructions: sign attacks, nearest-neighbor targeting,
the optimal noise-aware procedure, and a brute-force grid oracle.

Every operation returns perturbations satisfying the l-infinity budget it
was given; that is asserted at each boundary. sign(0) = 0 throughout, so
coordinates with no separation are left untouched.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classifiers import (
    ClassifierKind,
    GlrtClassifier,
    MinDistanceClassifier,
    MinimaxLinearClassifier,
)
from .model import HypothesisModel, pairwise_half_difference
from .rng import block_plan, noise_block

__all__ = [
    "UnsupportedDimensionError",
    "AttackResult",
    "NNSelection",
    "ErrorSurface",
    "binary_sign_attack",
    "nn_class_min_distance",
    "nn_class_glrt",
    "heuristic_agnostic_attack",
    "noise_aware_attack",
    "brute_force_attack_oracle",
]

_BUDGET_TOL = 1e-12


class UnsupportedDimensionError(ValueError):
    """The exhaustive grid oracle only scales to d <= 3."""


@dataclass(frozen=True)
class AttackResult:
    """A constructed perturbation.

    feasible is only informative in noise-aware mode, where False means no
    candidate attack could force a misclassification for this noise
    realization (the returned vector is then zero). target_class is the
    competing class the attack steers toward, when one was chosen.
    """

    vector: np.ndarray
    feasible: bool
    target_class: int | None = None


@dataclass(frozen=True)
class NNSelection:
    """Nearest-neighbor class choice with the per-candidate scores behind it.

    degenerate flags an all-zero score set (every coordinate of every
    pairwise separation nulled); the lowest candidate index is then
    returned purely by the tie rule.
    """

    target: int
    scores: dict[int, float]
    degenerate: bool = False


def _assert_budget(vector: np.ndarray, budget: float) -> np.ndarray:
    if np.max(np.abs(vector), initial=0.0) > budget + _BUDGET_TOL:
        raise AssertionError("constructed attack exceeds its l-infinity budget")
    return vector


def binary_sign_attack(
    model: HypothesisModel, true_class: int, other_class: int, strength: float
) -> np.ndarray:
    """Worst-case sign attack -strength * sign(mu_true - mu_other).

    Pushes the observation from the true template toward the competing one
    on every separating coordinate. For binary GLRT (and the minimax and
    minimum-distance rules) this is worst-case at full budget for both
    noise-aware and noise-agnostic adversaries.
    """
    j = model.check_class(true_class)
    k = model.check_class(other_class)
    if j == k:
        raise ValueError(f"need two distinct classes, got j = k = {j}")
    if strength < 0:
        raise ValueError(f"attack strength must be >= 0, got {strength}")
    e = -strength * np.sign(model.means[j] - model.means[k])
    return _assert_budget(e, strength)


def _candidate_separations(model: HypothesisModel, j: int) -> dict[int, np.ndarray]:
    out = {}
    for k in range(model.num_classes):
        if k == j:
            continue
        h = pairwise_half_difference(model, j, k)
        if not np.any(h):
            raise ValueError(f"classes {j} and {k} have identical means")
        out[k] = h
    return out


def nn_class_min_distance(model: HypothesisModel, true_class: int, eps: float) -> NNSelection:
    """Competing class that dominates the minimum-distance error at high SNR.

    Scores each candidate k by ||h|| - eps * ||h||_1 / ||h|| with
    h = (mu_j - mu_k)/2; the argmin is the class whose binary test fails
    worst under a sign attack of magnitude eps. Lowest index wins ties.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    j = model.check_class(true_class)
    scores = {}
    for k, h in _candidate_separations(model, j).items():
        l2 = float(np.linalg.norm(h))
        scores[k] = l2 - eps * float(np.abs(h).sum()) / l2
    target = min(scores, key=lambda k: (scores[k], k))
    return NNSelection(target=target, scores=scores)


def nn_class_glrt(
    model: HypothesisModel, true_class: int, eps: float, kappa: float | None = None
) -> NNSelection:
    """Competing class that dominates the GLRT (and PRL) error at high SNR.

    Scores candidate k by the surviving separation energy
    sum_i max(0, |h_i| - (kappa + eps)/2)^2, i.e. the squared soft threshold
    of the half-difference at (kappa + eps)/2. With kappa = eps this is the
    full-budget criterion sum over |h_i| >= eps of (|h_i| - eps)^2; a weaker
    employed strength kappa < eps raises the set of coordinates that still
    matter. An all-zero score set is legal and resolved by the tie rule
    with the degenerate flag set.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    kappa = eps if kappa is None else float(kappa)
    if not 0 <= kappa <= eps + _BUDGET_TOL:
        raise ValueError(f"kappa must satisfy 0 <= kappa <= eps, got kappa={kappa}, eps={eps}")
    j = model.check_class(true_class)
    threshold = 0.5 * (kappa + eps)
    scores = {}
    for k, h in _candidate_separations(model, j).items():
        kept = np.maximum(0.0, np.abs(h) - threshold)
        scores[k] = float(kept @ kept)
    target = min(scores, key=lambda k: (scores[k], k))
    return NNSelection(
        target=target, scores=scores, degenerate=all(s == 0.0 for s in scores.values())
    )


def heuristic_agnostic_attack(
    model: HypothesisModel,
    classifier_kind: ClassifierKind,
    true_class: int,
    eps: float,
    kappa: float,
) -> AttackResult:
    """Noise-agnostic attack: sign attack of strength kappa on the NN class.

    The NN class is chosen by the rule matched to the defense: the
    minimum-distance criterion scores with the employed strength kappa
    (that is what its worst-case error depends on); GLRT and PRL share the
    soft-threshold criterion in (eps, kappa). feasible is always True:
    an agnostic adversary cannot certify misclassification.
    """
    if not 0 <= kappa <= eps + _BUDGET_TOL:
        raise ValueError(f"kappa must satisfy 0 <= kappa <= eps, got kappa={kappa}, eps={eps}")
    j = model.check_class(true_class)
    if classifier_kind is ClassifierKind.MIN_DISTANCE:
        nn = nn_class_min_distance(model, j, kappa)
    elif classifier_kind in (ClassifierKind.GLRT, ClassifierKind.PAIRWISE_ROBUST_LINEAR):
        nn = nn_class_glrt(model, j, eps, kappa)
    elif classifier_kind is ClassifierKind.MINIMAX_LINEAR:
        if model.num_classes != 2:
            raise ValueError("the minimax linear classifier is binary only")
        nn = nn_class_glrt(model, j, eps, kappa)  # single candidate either way
    else:
        raise ValueError(f"unsupported classifier kind: {classifier_kind}")
    vector = binary_sign_attack(model, j, nn.target, kappa)
    return AttackResult(vector=_assert_budget(vector, eps), feasible=True, target_class=nn.target)


def noise_aware_attack(
    model: HypothesisModel,
    classifier,
    observation_noise,
    true_class: int,
    strength: float,
) -> AttackResult:
    """Optimal noise-aware attack of the given l-infinity magnitude.

    Knowing the noise realization, the adversary replays each of the M-1
    binary sign attacks through the classifier and takes the first (lowest
    candidate index) that makes the decision leave the true class; REJECT
    counts as leaving. If none works, misclassification is not achievable
    with this procedure and the zero attack is returned with feasible
    False.
    """
    j = model.check_class(true_class)
    noise = np.asarray(observation_noise, dtype=float)
    if noise.shape != (model.dim,):
        raise ValueError(f"noise must have shape ({model.dim},), got {noise.shape}")
    base = model.means[j] + noise
    for k in range(model.num_classes):
        if k == j:
            continue
        e = binary_sign_attack(model, j, k, strength)
        if int(classifier.decide_batch(base + e)[0]) != j:
            return AttackResult(vector=_assert_budget(e, strength), feasible=True, target_class=k)
    return AttackResult(vector=np.zeros(model.dim), feasible=False, target_class=None)


@dataclass(frozen=True)
class ErrorSurface:
    """Class-conditional error over a full grid of attacks.

    axes holds the per-coordinate attack grids; errors has shape
    (len(axis_1), ..., len(axis_d)). All grid points share the same noise
    draws, so surfaces are smooth and point-to-point comparisons are exact
    rather than two-sample.
    """

    axes: list[np.ndarray]
    errors: np.ndarray
    trials: int
    seed: int
    eps: float
    true_class: int

    @property
    def argmax_attack(self) -> np.ndarray:
        idx = np.unravel_index(int(np.argmax(self.errors)), self.errors.shape)
        return np.array([self.axes[i][idx[i]] for i in range(len(self.axes))])

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    def iter_rows(self):
        """Yield (attack_vector, error) in row-major grid order."""
        for idx in np.ndindex(self.errors.shape):
            e = np.array([self.axes[i][idx[i]] for i in range(len(self.axes))])
            yield e, float(self.errors[idx])


def brute_force_attack_oracle(
    model: HypothesisModel,
    classifier,
    true_class: int,
    eps: float,
    grid_points_per_axis: int = 41,
    trials: int = 10_000,
    seed: int = 0,
    threads: int = 1,
) -> ErrorSurface:
    """Monte Carlo class-conditional error for every attack on a grid.

    Exhaustively realizes the noise-agnostic maximization over the
    l-infinity ball at desk scale (d <= 3), with common random numbers
    across grid points. Binary models with cost- or statistic-separable
    rules take a per-coordinate fast path; everything else goes through
    the classifier's batch decisions in grid chunks.
    """
    j = model.check_class(true_class)
    d = model.dim
    if d > 3:
        raise UnsupportedDimensionError(
            f"the grid oracle supports d <= 3, got d = {d} "
            f"({grid_points_per_axis}^{d} grid points would not be tractable)"
        )
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if grid_points_per_axis < 1:
        raise ValueError("need at least one grid point per axis")
    if eps == 0:
        axes = [np.zeros(1) for _ in range(d)]
    else:
        axes = [np.linspace(-eps, eps, grid_points_per_axis) for _ in range(d)]

    # identical per-trial noise to the sweep engine's, so grid estimates and
    # engine estimates at the same (seed, trials) are exactly comparable
    noise = model.sigma * np.concatenate(
        [noise_block(seed, b, rows, d) for b, _, rows in block_plan(trials)]
    )
    if model.num_classes == 2 and isinstance(
        classifier, (GlrtClassifier, MinDistanceClassifier, MinimaxLinearClassifier)
    ):
        counts = _separable_surface_counts(model, classifier, j, axes, noise)
    else:
        counts = _generic_surface_counts(model, classifier, j, axes, noise, threads)
    return ErrorSurface(
        axes=axes,
        errors=counts / trials,
        trials=trials,
        seed=seed,
        eps=eps,
        true_class=j,
    )


def _error_mask(stat: np.ndarray, j: int) -> np.ndarray:
    # stat = wrong-class cost minus true-class cost; ties go to the lower index
    return stat < 0 if j == 0 else stat <= 0


def _separable_surface_counts(model, classifier, j, axes, noise) -> np.ndarray:
    """Per-coordinate decomposition of binary decision statistics.

    For the binary GLRT, minimum-distance and minimax rules the decisive
    statistic is a sum of per-coordinate terms in (e_i, N_i), so a table of
    shape (grid, trials) per axis replaces the full (grid^d, trials, d)
    tensor.
    """
    other = 1 - j
    delta = model.means[j] - model.means[other]
    trials = noise.shape[0]

    tables = []
    for i, axis in enumerate(axes):
        v = axis[:, None] + noise[None, :, i]  # e + N, shape (g, trials)
        if isinstance(classifier, GlrtClassifier):
            eps_c = classifier.eps
            wrong = np.maximum(0.0, np.abs(delta[i] + v) - eps_c)
            true = np.maximum(0.0, np.abs(v) - eps_c)
            tables.append(wrong * wrong - true * true)
        elif isinstance(classifier, MinDistanceClassifier):
            tables.append(delta[i] * (delta[i] + 2.0 * v))
        else:  # minimax linear: oriented statistic, positive favors class j
            rule = classifier.rule
            orient = 1.0 if j == 0 else -1.0
            x = model.means[j][i] + v
            contrib = orient * rule.weight[i] * x
            # spread the offset across coordinates once
            if i == 0:
                contrib = contrib + orient * rule.offset
            tables.append(contrib)

    shape = tuple(len(a) for a in axes)
    counts = np.zeros(shape, dtype=np.int64)
    if len(axes) == 1:
        counts[:] = _error_mask(tables[0], j).sum(axis=1)
    elif len(axes) == 2:
        for a in range(shape[0]):
            s = tables[0][a][None, :] + tables[1]
            counts[a, :] = _error_mask(s, j).sum(axis=1)
    else:
        for a in range(shape[0]):
            s_a = tables[0][a][None, :] + tables[1]  # (g2, trials)
            for b in range(shape[1]):
                s = s_a[b][None, :] + tables[2]
                counts[a, b, :] = _error_mask(s, j).sum(axis=1)
    return counts


def _generic_surface_counts(model, classifier, j, axes, noise, threads) -> np.ndarray:
    grid = np.array(list(itertools.product(*axes)))
    trials, d = noise.shape
    base = model.means[j] + noise

    # keep each broadcast tensor around 8M elements
    chunk = max(1, int(8_000_000 / max(1, trials * d)))
    spans = [(s, min(s + chunk, len(grid))) for s in range(0, len(grid), chunk)]

    def run_span(span):
        lo, hi = span
        x = grid[lo:hi, None, :] + base[None, :, :]
        labels = classifier.decide_batch(x.reshape(-1, d)).reshape(hi - lo, trials)
        return (labels != j).sum(axis=1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_span, spans))
    else:
        parts = [run_span(s) for s in spans]
    counts = np.concatenate(parts)
    return counts.reshape(tuple(len(a) for a in axes))
