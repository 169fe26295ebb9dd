"""Bayesian model averaging over small constituent subsets.

Candidate models are all subsets (up to ``max_subset`` members) of the
``pool_size`` library spectra most correlated with the pixel. Each subset is
fit with the base solver; models get equal prior mass and BIC-derived
posterior weights. With ``quadratic=True`` every subset design is augmented
with elementwise products of its members (second-order interactions).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .dfs import centered_unit_columns, rank_by_correlation
from .errors import EnsembleError, UnmixError, ValidationError
from .evaluate import TAU_MODEL, UnmixResult, make_result
from .solvers import FitResult, SolverSpec, solve
from .speclib import INTERACTION_SEP, Pixel, SpectralLibrary

RSS_FLOOR = 1e-30


@dataclass(frozen=True)
class BmaConfig:
    base: SolverSpec = field(default_factory=lambda: SolverSpec(kind="nnls"))
    pool_size: int = 16
    max_subset: int = 3
    quadratic: bool = False
    include_squares: bool = True
    weight_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.base.kind not in ("nnls", "lasso", "elasticnet"):
            raise ValidationError(f"BMA base solver must be nnls, lasso or elasticnet, got {self.base.kind!r}")
        if not (self.pool_size >= self.max_subset >= 1):
            raise ValidationError("need pool_size >= max_subset >= 1")
        if not (self.weight_floor >= 0):
            raise ValidationError("weight_floor must be >= 0")


@dataclass(frozen=True, eq=False)
class ModelPosterior:
    subset: tuple[int, ...]
    terms: tuple[tuple[int, int], ...]  # interaction pairs (library indices) after the linear terms
    bic: float
    weight: float
    fit: FitResult


def bic_score(rss: float, n_bands: int, k: int) -> float:
    """Gaussian-likelihood BIC: ``W ln(rss/W) + k ln W``."""
    if n_bands <= 0:
        raise ValidationError("n_bands must be > 0")
    return n_bands * math.log(max(rss, RSS_FLOOR) / n_bands) + k * math.log(n_bands)


def bic_weights(bics, floor: float = 0.0) -> NDArray[np.float64]:
    """Equal-prior posterior weights ``exp(-BIC/2)``, normalized; weights under ``floor`` are zeroed."""
    b = np.asarray(bics, dtype=np.float64)
    w = np.exp(-(b - b.min()) / 2.0)
    w /= w.sum()
    if floor > 0:
        w = np.where(w >= floor, w, 0.0)
        w /= w.sum()
    return w


def candidate_pool(library: SpectralLibrary, y: NDArray[np.float64], pool_size: int) -> list[int]:
    """Indices of the ``pool_size`` spectra most correlated with ``y``, ties by library order."""
    scores = rank_by_correlation(centered_unit_columns(library.matrix), y)
    order = np.argsort(-scores, kind="stable")
    return sorted(int(i) for i in order[: min(pool_size, len(library))])


def enumerate_candidates(library: SpectralLibrary, y, cfg: BmaConfig) -> list[tuple[int, ...]]:
    """Every non-empty subset of the correlation pool with at most ``max_subset`` members."""
    y = np.asarray(getattr(y, "reflectance", y), dtype=np.float64)
    pool = candidate_pool(library, y, cfg.pool_size)
    out: list[tuple[int, ...]] = []
    for k in range(1, min(cfg.max_subset, len(pool)) + 1):
        out.extend(itertools.combinations(pool, k))
    return out


def quadratic_pairs(n: int, include_squares: bool = True) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i if include_squares else i + 1, n)]


def expand_quadratic(columns, include_squares: bool = True) -> NDArray[np.float64]:
    """Linear columns followed by elementwise products ``s_i*s_j`` (i <= j) in lexicographic order."""
    X = np.asarray(columns, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] < 1:
        raise ValidationError("expand_quadratic needs at least one column")
    pairs = quadratic_pairs(X.shape[1], include_squares)
    if not pairs:
        return X.copy()
    products = np.column_stack([X[:, i] * X[:, j] for i, j in pairs])
    return np.hstack([X, products])


def _design(S, subset, cfg: BmaConfig) -> tuple[NDArray[np.float64], tuple[tuple[int, int], ...]]:
    X = S[:, list(subset)]
    if not cfg.quadratic:
        return X, ()
    local = quadratic_pairs(len(subset), cfg.include_squares)
    return expand_quadratic(X, cfg.include_squares), tuple((subset[i], subset[j]) for i, j in local)


def bma_ensemble(library: SpectralLibrary, y, cfg: BmaConfig) -> tuple[list[ModelPosterior], int]:
    """Fit and weight every candidate model. Returns ``(members, n_failed)``."""
    y = np.asarray(getattr(y, "reflectance", y), dtype=np.float64)
    S = library.matrix
    W = S.shape[0]
    fitted = []
    failed = 0
    errors: list[str] = []
    for subset in enumerate_candidates(library, y, cfg):
        X, terms = _design(S, subset, cfg)
        try:
            fit = solve(X, y, cfg.base)
        except (UnmixError, np.linalg.LinAlgError) as exc:
            failed += 1
            errors.append(f"{subset}: {exc}")
            continue
        k = int(np.count_nonzero(fit.coefficients))
        fitted.append((subset, terms, bic_score(fit.rss, W, k), fit))
    if not fitted:
        detail = errors[0] if errors else "no candidate models"
        raise EnsembleError(f"all {failed} BMA member fits failed; first error: {detail}")
    fitted.sort(key=lambda m: (len(m[0]), m[0]))
    weights = bic_weights([m[2] for m in fitted], cfg.weight_floor)
    members = [
        ModelPosterior(subset, terms, bic, float(w), fit)
        for (subset, terms, bic, fit), w in zip(fitted, weights)
        if w > 0
    ]
    return members, failed


def bma_unmix(
    library: SpectralLibrary,
    pixel: Pixel,
    cfg: BmaConfig | None = None,
    technique: str | None = None,
    tau_model: float = TAU_MODEL,
) -> UnmixResult:
    cfg = cfg or BmaConfig()
    y = pixel.reflectance
    if y.size != library.band_count:
        raise ValidationError(f"pixel has {y.size} bands, library has {library.band_count}")
    members, failed = bma_ensemble(library, y, cfg)
    N = len(library)
    names = library.names
    prefix = "bmaq" if cfg.quadratic else "bma"
    name = technique or f"{prefix}-{cfg.base.kind}"

    abundances = np.zeros(N)
    interactions: dict[str, float] = {}
    if len(members) == 1:
        m = members[0]
        n_lin = len(m.subset)
        abundances[list(m.subset)] = m.fit.coefficients[:n_lin]
        for (i, j), b in zip(m.terms, m.fit.coefficients[n_lin:]):
            interactions[f"{names[i]}{INTERACTION_SEP}{names[j]}"] = float(b)
        X, _ = _design(library.matrix, m.subset, cfg)
        inferred = X @ m.fit.coefficients
    else:
        inferred = np.zeros_like(y)
        for m in members:
            n_lin = len(m.subset)
            abundances[list(m.subset)] += m.weight * m.fit.coefficients[:n_lin]
            for (i, j), b in zip(m.terms, m.fit.coefficients[n_lin:]):
                key = f"{names[i]}{INTERACTION_SEP}{names[j]}"
                interactions[key] = interactions.get(key, 0.0) + m.weight * float(b)
            inferred += m.weight * (y - m.fit.residual)

    top = sorted(members, key=lambda m: -m.weight)[:5]
    diagnostics = {
        "n_models": len(members),
        "n_failed": failed,
        "top_models": [([names[i] for i in m.subset], m.weight) for m in top],
    }
    return make_result(pixel.id, name, library, abundances, y, inferred, tau_model, interactions, diagnostics)
