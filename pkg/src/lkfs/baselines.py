"""Benchmark unsupervised selectors: sparse k-means and spectral feature scoring."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import ClusterAssignment, kmeans
from .dataio import ExpressionMatrix
from .errors import ConfigError, DataValidationError
from .kernel import gaussian_kernel, median_bandwidth

_L1_BIND_TOL = 1e-6
_WEIGHT_CHANGE_TOL = 1e-4
_MAX_ROUNDS = 20


@dataclass(frozen=True)
class SkmResult:
    """Non-negative feature weights under an L1 budget, with the final clustering."""

    weights: np.ndarray
    assignment: ClusterAssignment
    s: float
    objective_history: tuple[float, ...]
    selected: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SpecResult:
    """Per-feature graph-consistency scores (lower = more consistent) and ranking."""

    scores: np.ndarray
    ranking: tuple[int, ...]
    selected: tuple[int, ...] | None = None


def soft_threshold(x: np.ndarray | float, delta: float) -> np.ndarray | float:
    return np.sign(x) * np.maximum(np.abs(x) - delta, 0.0)


def _l1_bounded_weights(b: np.ndarray, s: float) -> np.ndarray:
    """Maximize w.b subject to ||w||_2 <= 1, ||w||_1 <= s, w >= 0.

    Solution is soft_threshold(b+, delta) renormalized to unit L2, with delta
    found by bisection so the L1 bound binds when the unthresholded weights
    violate it. When the top of ``b`` is tied across more entries than s^2 the
    bound cannot bind under L2 normalization; mass s/|T| on the tied set is the
    maximizer there (the L2 constraint goes slack).
    """
    pos = np.maximum(b, 0.0)
    top = pos.max()
    if top == 0.0:
        return np.full(b.size, s / b.size)
    w = pos / np.linalg.norm(pos)
    if np.abs(w).sum() <= s:
        return w
    tied = pos == top
    if math.sqrt(tied.sum()) >= s - 1e-12:
        out = np.zeros(b.size)
        out[tied] = s / tied.sum()
        return out
    lo, hi = 0.0, top
    for _ in range(200):
        delta = (lo + hi) / 2.0
        thresholded = soft_threshold(pos, delta)
        w = thresholded / np.linalg.norm(thresholded)
        l1 = np.abs(w).sum()
        if abs(l1 - s) <= _L1_BIND_TOL:
            return w
        if l1 > s:
            lo = delta
        else:
            hi = delta
    return w


def _between_cluster_ss(values: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-feature between-cluster sum of squares, clamped at zero."""
    total = ((values - values.mean(axis=0)) ** 2).sum(axis=0)
    within = np.zeros(values.shape[1])
    for c in range(k):
        members = values[labels == c]
        if members.shape[0] == 0:
            continue
        within += ((members - members.mean(axis=0)) ** 2).sum(axis=0)
    return np.maximum(total - within, 0.0)


def sparse_kmeans(
    X: ExpressionMatrix | np.ndarray,
    k: int,
    s: float,
    seed: int,
    restarts: int = 10,
) -> SkmResult:
    """Alternate weighted k-means with the closed-form weight update.

    Clustering runs on features scaled by sqrt(w); weights maximize the
    weighted between-cluster sum of squares under the L1/L2 constraints.
    Stops when the relative L1 weight change drops below 1e-4 (max 20 rounds).
    """
    values = X.values if isinstance(X, ExpressionMatrix) else np.asarray(X, dtype=np.float64)
    d = values.shape[1]
    if not 1.0 < s <= math.sqrt(d) + 1e-12:
        raise ConfigError(f"s must satisfy 1 < s <= sqrt(d)={math.sqrt(d):.4f}, got {s}")
    if k < 2:
        raise ConfigError("k must be >= 2")
    w = np.full(d, 1.0 / math.sqrt(d))
    assignment = None
    prev_b = None
    history: list[float] = []
    for round_no in range(_MAX_ROUNDS):
        scaled = values * np.sqrt(w)
        candidate = kmeans(scaled, k, restarts=restarts, seed=_round_seed(seed, round_no))
        b = _between_cluster_ss(values, candidate.labels, k)
        # k-means restarts are heuristic; keep the previous partition if it
        # scored better under the current weights
        if prev_b is not None and float(w @ b) < float(w @ prev_b):
            b = prev_b
        else:
            assignment = candidate
            prev_b = b
        w_new = _l1_bounded_weights(b, s)
        history.append(float(w_new @ b))
        change = np.abs(w_new - w).sum() / max(np.abs(w).sum(), 1e-300)
        w = w_new
        if change < _WEIGHT_CHANGE_TOL:
            break
    return SkmResult(
        weights=w,
        assignment=assignment,
        s=float(s),
        objective_history=tuple(history),
    )


def _round_seed(seed: int, round_no: int) -> int:
    return int(np.random.SeedSequence([seed, round_no]).generate_state(1, np.uint64)[0])


def spec_scores(X: ExpressionMatrix | np.ndarray, sigma: float | None = None) -> SpecResult:
    """Rank features by smoothness on the dense Gaussian sample-similarity graph.

    Each feature f is degree-normalized and scored by the normalized-Laplacian
    quadratic form; zero-norm (all-zero) features score +inf and rank last.
    """
    values = X.values if isinstance(X, ExpressionMatrix) else np.asarray(X, dtype=np.float64)
    if values.shape[0] < 2:
        raise DataValidationError("spec_scores needs at least 2 samples")
    if sigma is None:
        sigma = median_bandwidth(values)
    elif sigma <= 0:
        raise ConfigError("sigma must be > 0")
    similarity = gaussian_kernel(values, sigma).entries
    scores = graph_consistency_scores(values, similarity)
    ranking = tuple(int(j) for j in np.argsort(scores, kind="stable"))
    return SpecResult(scores=scores, ranking=ranking)


def graph_consistency_scores(values: np.ndarray, similarity: np.ndarray) -> np.ndarray:
    """Normalized-Laplacian quadratic form of each degree-normalized feature.

    The feature normalization makes each score invariant to positive rescaling
    of that feature for a fixed similarity graph.
    """
    n, d = values.shape
    degree = similarity.sum(axis=1)
    dsqrt = np.sqrt(degree)
    laplacian = np.eye(n) - similarity / np.outer(dsqrt, dsqrt)
    scores = np.empty(d)
    for j in range(d):
        g = dsqrt * values[:, j]
        norm = np.linalg.norm(g)
        if norm == 0.0:
            scores[j] = np.inf
            continue
        fhat = g / norm
        scores[j] = max(float(fhat @ laplacian @ fhat), 0.0)
    return scores


def select_top_p(result: SkmResult | SpecResult, p: int) -> tuple[int, ...]:
    """Top-p features: largest weights (SKM) or smallest scores (SPEC);
    ties break toward the lowest index."""
    if isinstance(result, SkmResult):
        d = result.weights.size
        if p > d:
            raise ConfigError(f"p={p} exceeds d={d}")
        order = np.argsort(-result.weights, kind="stable")
        return tuple(int(j) for j in order[:p])
    if isinstance(result, SpecResult):
        if p > result.scores.size:
            raise ConfigError(f"p={p} exceeds d={result.scores.size}")
        return tuple(result.ranking[:p])
    raise ConfigError(f"unsupported result type: {type(result).__name__}")


def with_selection(result: SkmResult | SpecResult, p: int):
    """Return a copy of the result with ``selected`` filled in."""
    return replace(result, selected=select_top_p(result, p))


def save_baseline_solution(
    result: SkmResult | SpecResult,
    feature_names: Sequence[str],
    p: int,
    path: str | Path,
) -> None:
    """Same dump layout as the MKL solution, with a method tag."""
    selected = select_top_p(result, p)
    if isinstance(result, SkmResult):
        method = "skm"
        mu = {feature_names[j]: float(result.weights[j]) for j in selected}
        trajectory = [float(v) for v in result.objective_history]
    else:
        method = "spec"
        mu = {feature_names[j]: float(result.scores[j]) for j in selected}
        trajectory = []
    doc = {
        "method": method,
        "selected": [feature_names[j] for j in selected],
        "mu": mu,
        "trajectory": trajectory,
        "target_alignment": None,
        "stop_reason": "reached_p",
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
