"""Greedy multiple-kernel selection by alignment with a target kernel.

At each iteration the current combination is paired with every remaining
candidate kernel; the two-kernel weights maximizing alignment with the target
have a closed form (a 2x2 linear solve, falling back to the better boundary
point when a weight would go negative). The candidate with the best achieved
alignment is accepted while the gain exceeds the improvement tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataValidationError, NumericalError
from .kernel import KernelMatrix, frobenius_inner

_DET_FLOOR = 1e-14  # relative determinant threshold for the 2x2 solve


@dataclass(frozen=True)
class MklConfig:
    p: int
    improvement_tolerance: float = 1e-6
    candidate_subsample: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.improvement_tolerance < 0:
            raise ConfigError("improvement_tolerance must be >= 0")
        if self.candidate_subsample is not None and self.candidate_subsample < 1:
            raise ConfigError("candidate_subsample must be >= 1 when set")


@dataclass(frozen=True)
class MklSolution:
    """Sparse non-negative kernel weights plus the selection trace.

    ``mu`` is a length-d vector summing to one, nonzero exactly on ``selected``
    (given in acceptance order); ``alignment_trajectory`` holds the alignment
    after each accepted kernel.
    """

    mu: np.ndarray
    selected: tuple[int, ...]
    alignment_trajectory: tuple[float, ...]
    target_alignment: float
    stop_reason: str


def _pair_weights_from_scalars(
    aa: float, bb: float, ab: float, az: float, bz: float, zz: float
) -> tuple[float, float, float]:
    """Maximize A(mu_a*Ka + mu_b*Kb, Kz) over mu >= 0 given all inner products."""
    det = aa * bb - ab * ab
    if det > _DET_FLOOR * max(aa * bb, 1.0):
        wa = (bb * az - ab * bz) / det
        wb = (aa * bz - ab * az) / det
        if wa > 0.0 and wb > 0.0:
            total = wa + wb
            wa, wb = wa / total, wb / total
            quad = wa * wa * aa + 2.0 * wa * wb * ab + wb * wb * bb
            achieved = (wa * az + wb * bz) / math.sqrt(quad * zz)
            return wa, wb, achieved
    # stationary point infeasible (or kernels proportional): best boundary wins
    align_a = az / math.sqrt(aa * zz) if aa > 0 else None
    align_b = bz / math.sqrt(bb * zz) if bb > 0 else None
    if align_a is None and align_b is None:
        raise NumericalError("pair weights undefined: both kernels have zero norm")
    if align_b is None or (align_a is not None and align_a >= align_b):
        return 1.0, 0.0, align_a
    return 0.0, 1.0, align_b


def solve_pair_weights(
    Ka: KernelMatrix, Kb: KernelMatrix, Kz: KernelMatrix
) -> tuple[float, float, float]:
    """Optimal non-negative pair (mu_a, mu_b), normalized to sum 1, and the
    alignment it achieves against ``Kz``."""
    if Ka.n != Kb.n or Ka.n != Kz.n:
        raise DataValidationError("pair-weight kernels must share dimensions")
    return _pair_weights_from_scalars(
        aa=frobenius_inner(Ka, Ka),
        bb=frobenius_inner(Kb, Kb),
        ab=frobenius_inner(Ka, Kb),
        az=frobenius_inner(Ka, Kz),
        bz=frobenius_inner(Kb, Kz),
        zz=frobenius_inner(Kz, Kz),
    )


def greedy_select(
    candidates: Sequence[KernelMatrix], Kz: KernelMatrix, config: MklConfig
) -> MklSolution:
    """Iteratively build the aligned combination, one candidate kernel at a time.

    Iteration 0 takes the single best-aligned candidate; afterwards the running
    combination K_mu is re-weighted against each remaining candidate with the
    two-kernel closed form, accumulated weights rescaling by the kept share.
    Ties break toward the lowest feature index. Stops at ``config.p`` features
    or when the best gain falls to ``config.improvement_tolerance`` or below.
    """
    active = [j for j, K in enumerate(candidates) if not K.degenerate]
    if not active:
        raise DataValidationError("no non-degenerate candidate kernels")
    zz = frobenius_inner(Kz, Kz)
    cz = {j: frobenius_inner(candidates[j], Kz) for j in active}
    ss = {j: frobenius_inner(candidates[j], candidates[j]) for j in active}

    first = max(active, key=lambda j: (cz[j] / math.sqrt(ss[j] * zz), -j))
    mu = np.zeros(len(candidates))
    mu[first] = 1.0
    selected = [first]
    k_mu = candidates[first].entries.copy()
    mz, mm = cz[first], ss[first]
    trajectory = [mz / math.sqrt(mm * zz)]
    remaining = [j for j in active if j != first]
    subsample_rng = (
        np.random.default_rng([config.seed, 7]) if config.candidate_subsample else None
    )

    stop_reason = "reached_p"
    while len(selected) < config.p:
        if not remaining:
            stop_reason = "no_candidates"
            break
        pool = remaining
        if subsample_rng is not None and config.candidate_subsample < len(remaining):
            pool_idx = subsample_rng.choice(
                len(remaining), size=config.candidate_subsample, replace=False
            )
            pool = [remaining[i] for i in sorted(pool_idx)]
        best = None
        for j in pool:
            mj = float((k_mu * candidates[j].entries).sum())
            w1, w2, achieved = _pair_weights_from_scalars(mm, ss[j], mj, mz, cz[j], zz)
            key = (achieved, -j)
            if best is None or key > best[0]:
                best = (key, j, w1, w2)
        (achieved, _), j, w1, w2 = best
        if achieved - trajectory[-1] <= config.improvement_tolerance:
            stop_reason = "no_improvement"
            break
        k_mu *= w1
        k_mu += w2 * candidates[j].entries
        mu *= w1
        mu[j] = w2
        selected.append(j)
        remaining.remove(j)
        mz = float((k_mu * Kz.entries).sum())
        mm = float((k_mu * k_mu).sum())
        trajectory.append(mz / math.sqrt(mm * zz))

    mu = mu / mu.sum()
    return MklSolution(
        mu=mu,
        selected=tuple(selected),
        alignment_trajectory=tuple(trajectory),
        target_alignment=trajectory[-1],
        stop_reason=stop_reason,
    )


def combined_kernel(solution: MklSolution, candidates: Sequence[KernelMatrix]) -> KernelMatrix:
    """K_mu = sum of mu_i * K_i over the selected features."""
    if any(j >= len(candidates) or j < 0 for j in solution.selected):
        raise DataValidationError("selected index out of candidate range")
    n = candidates[solution.selected[0]].n
    entries = np.zeros((n, n))
    for j in solution.selected:
        entries += solution.mu[j] * candidates[j].entries
    return KernelMatrix(entries, bandwidth=float("nan"), source="combined")


def solution_to_dict(
    solution: MklSolution, feature_names: Sequence[str], method: str = "lkfs"
) -> dict:
    return {
        "method": method,
        "selected": [feature_names[j] for j in solution.selected],
        "mu": {feature_names[j]: float(solution.mu[j]) for j in solution.selected},
        "trajectory": [float(a) for a in solution.alignment_trajectory],
        "target_alignment": float(solution.target_alignment),
        "stop_reason": solution.stop_reason,
    }


def save_solution(
    solution: MklSolution, feature_names: Sequence[str], path: str | Path, method: str = "lkfs"
) -> None:
    Path(path).write_text(
        json.dumps(solution_to_dict(solution, feature_names, method), indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
