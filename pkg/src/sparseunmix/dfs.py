"""Depth-first feature search around a LASSO / ElasticNet base fit.

Each node is a subset of library columns. A node's children add one of the
``candidate_fanout`` unselected columns best correlated (absolute Pearson)
with the node's residual. Every child is refit with the base solver; children
whose RMSE does not drop by ``min_improvement`` are pruned. The answer is the
visited node with the lowest ``rmse + gamma * size``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError
from .evaluate import TAU_MODEL, UnmixResult, make_result
from .solvers import SolverSpec, fit_gram
from .speclib import Pixel, SpectralLibrary


@dataclass(frozen=True)
class DfsConfig:
    base: SolverSpec = field(default_factory=lambda: SolverSpec(kind="lasso", alpha=1e-4, method="active-set"))
    max_depth: int = 5
    candidate_fanout: int = 8
    min_improvement: float = 1e-4
    gamma: float = 0.01

    def __post_init__(self) -> None:
        if self.base.kind not in ("lasso", "elasticnet"):
            raise ValidationError(f"DFS base solver must be lasso or elasticnet, got {self.base.kind!r}")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.candidate_fanout < 1:
            raise ValidationError("candidate_fanout must be >= 1")
        if not (self.min_improvement >= 0):
            raise ValidationError("min_improvement must be >= 0")
        if not (self.gamma >= 0):
            raise ValidationError("gamma must be >= 0")

    @property
    def pruning(self) -> bool:
        """``min_improvement == 0`` disables pruning: every child is expanded."""
        return self.min_improvement > 0


def search_bound(cfg: DfsConfig) -> int:
    """Most non-root nodes the search can visit: sum of fanout**d for d = 1..max_depth."""
    return sum(cfg.candidate_fanout**d for d in range(1, cfg.max_depth + 1))


def centered_unit_columns(S: NDArray[np.float64]) -> NDArray[np.float64]:
    """Columns centered and scaled to unit norm, so ``C.T @ r`` gives Pearson correlations up to ``|r|``."""
    C = S - S.mean(axis=0)
    norms = np.linalg.norm(C, axis=0)
    return np.divide(C, norms, out=np.zeros_like(C), where=norms > 0)


def rank_by_correlation(C: NDArray[np.float64], r: NDArray[np.float64]) -> NDArray[np.float64]:
    """Absolute Pearson correlation of every column of ``C`` with ``r``."""
    rc = r - r.mean()
    nr = np.linalg.norm(rc)
    if nr == 0:
        return np.zeros(C.shape[1])
    return np.abs(C.T @ rc) / nr


class _Node:
    __slots__ = ("subset", "coef", "residual", "rmse", "converged", "size", "score")

    def __init__(self, subset, coef, residual, rmse, converged, gamma):
        self.subset = subset
        self.coef = coef
        self.residual = residual
        self.rmse = rmse
        self.converged = converged
        self.size = int(np.count_nonzero(coef))
        self.score = rmse + gamma * self.size


def dfs_unmix(
    library: SpectralLibrary,
    pixel: Pixel,
    cfg: DfsConfig | None = None,
    technique: str | None = None,
    tau_model: float = TAU_MODEL,
) -> UnmixResult:
    cfg = cfg or DfsConfig()
    if len(library) == 0:
        raise ValidationError("DFS needs a non-empty library")
    y = pixel.reflectance
    S = library.matrix
    W, N = S.shape
    if y.size != W:
        raise ValidationError(f"pixel has {y.size} bands, library has {W}")

    gram = S.T @ S / W
    corr = S.T @ y / W
    yy_half = 0.5 * float(y @ y) / W
    C = centered_unit_columns(S)
    spec = cfg.base

    fits: dict[tuple[int, ...], _Node] = {}
    stats = {"fits": 0, "pruned": 0, "nonconverged": 0}

    def fit(subset: tuple[int, ...]) -> _Node:
        node = fits.get(subset)
        if node is not None:
            return node
        idx = np.array(subset, dtype=np.int64)
        coef, _, converged, _ = fit_gram(
            np.ascontiguousarray(gram[np.ix_(idx, idx)]), np.ascontiguousarray(corr[idx]), yy_half, W, spec
        )
        residual = y - S[:, idx] @ coef
        node = _Node(subset, coef, residual, float(np.sqrt(np.mean(residual * residual))), converged, cfg.gamma)
        stats["fits"] += 1
        if not converged:
            stats["nonconverged"] += 1
        fits[subset] = node
        return node

    root = _Node((), np.zeros(0), y.copy(), float(np.sqrt(np.mean(y * y))), True, cfg.gamma)
    visited: set[tuple[int, ...]] = {()}
    visited_scores = [root.score]
    best = root

    def expand(node: _Node, depth: int) -> None:
        nonlocal best
        if depth >= cfg.max_depth:
            return
        scores = rank_by_correlation(C, node.residual)
        if node.subset:
            scores[list(node.subset)] = -1.0
        order = np.argsort(-scores, kind="stable")
        n_open = N - len(node.subset)
        for j in order[: min(cfg.candidate_fanout, n_open)]:
            child_subset = tuple(sorted(node.subset + (int(j),)))
            if child_subset in visited:
                continue
            child = fit(child_subset)
            if cfg.pruning and node.rmse - child.rmse < cfg.min_improvement:
                stats["pruned"] += 1
                continue
            visited.add(child_subset)
            visited_scores.append(child.score)
            if child.score < best.score:
                best = child
            expand(child, depth + 1)

    expand(root, 0)

    coefficients = np.zeros(N)
    if best.subset:
        coefficients[list(best.subset)] = best.coef
    name = technique or f"dfs-{spec.kind}"
    diagnostics = {
        "n_visited": len(visited) - 1,
        "n_fits": stats["fits"],
        "n_pruned": stats["pruned"],
        "n_nonconverged": stats["nonconverged"],
        "best_converged": best.converged,
        "best_score": best.score,
        "visited_scores": visited_scores,
    }
    return make_result(
        pixel.id, name, library, coefficients, y, y - best.residual, tau_model, diagnostics=diagnostics
    )
