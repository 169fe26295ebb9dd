"""The ten compared unmixing techniques, their default hyperparameters, and ROI runners."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from functools import partial
from typing import Mapping, Sequence, Union

from .bma import BmaConfig, bma_unmix
from .dfs import DfsConfig, dfs_unmix
from .errors import ValidationError
from .evaluate import TAU_MODEL, UnmixResult, make_result
from .solvers import SolverSpec, solve
from .speclib import Pixel, Roi, SpectralLibrary

TECHNIQUES = (
    "lasso",
    "elasticnet",
    "dfs-lasso",
    "dfs-elasticnet",
    "bma-nnls",
    "bma-lasso",
    "bma-elasticnet",
    "bmaq-nnls",
    "bmaq-lasso",
    "bmaq-elasticnet",
)
# single-model baselines accepted by `unmix` but not part of the comparison
BASELINES = ("ols", "nnls")

DEFAULT_ALPHAS = {
    "lasso": 0.0004,
    "elasticnet": 0.001,
    "dfs-lasso": 0.0001,
    "dfs-elasticnet": 0.001,
    "bma-lasso": 0.0001,
    "bma-elasticnet": 0.0001,
    "bmaq-lasso": 0.0001,
    "bmaq-elasticnet": 0.001,
}
DEFAULT_L1_RATIO = 0.5

TechniqueConfig = Union[SolverSpec, DfsConfig, BmaConfig]

_SOLVER_KEYS = {f.name for f in fields(SolverSpec)} - {"kind"}
_DFS_KEYS = {f.name for f in fields(DfsConfig)} - {"base"}
_BMA_KEYS = {f.name for f in fields(BmaConfig)} - {"base", "quadratic"}


def base_kind(technique: str) -> str:
    return technique.rsplit("-", 1)[-1]


def check_technique(technique: str, allow_baselines: bool = False) -> None:
    valid = TECHNIQUES + (BASELINES if allow_baselines else ())
    if technique not in valid:
        extra = f" (or baselines {', '.join(BASELINES)})" if allow_baselines else ""
        raise ValidationError(
            f"unknown technique {technique!r}; valid techniques: {', '.join(TECHNIQUES)}{extra}"
        )


def technique_config(technique: str, overrides: Mapping | None = None) -> TechniqueConfig:
    """Default configuration for ``technique`` with ``overrides`` applied.

    Overrides are flat: solver keys (``alpha``, ``l1_ratio``, ``nonneg``, ...)
    go to the base solver, search/ensemble keys to the wrapper.
    """
    check_technique(technique, allow_baselines=True)
    overrides = dict(overrides or {})
    kind = technique if technique in BASELINES else base_kind(technique)
    solver_kw = {"kind": kind}
    if kind in ("lasso", "elasticnet"):
        solver_kw["alpha"] = DEFAULT_ALPHAS[technique]
    if kind == "elasticnet":
        solver_kw["l1_ratio"] = DEFAULT_L1_RATIO
    if kind in ("lasso", "elasticnet") and technique != kind:
        # subset fits inside DFS / BMA are tiny: solve them exactly
        solver_kw["method"] = "active-set"
    if technique.startswith("dfs-"):
        wrapper_keys = _DFS_KEYS
    elif technique.startswith("bma"):
        wrapper_keys = _BMA_KEYS
    else:
        wrapper_keys = set()
    unknown = set(overrides) - _SOLVER_KEYS - wrapper_keys
    if unknown:
        raise ValidationError(f"unknown parameter(s) for {technique}: {', '.join(sorted(unknown))}")
    solver_kw.update({k: v for k, v in overrides.items() if k in _SOLVER_KEYS})
    base = SolverSpec(**solver_kw)
    wrapper_kw = {k: v for k, v in overrides.items() if k in wrapper_keys}
    if technique.startswith("dfs-"):
        return DfsConfig(base=base, **wrapper_kw)
    if technique.startswith("bma"):
        return BmaConfig(base=base, quadratic=technique.startswith("bmaq-"), **wrapper_kw)
    return base


def config_to_dict(config: TechniqueConfig) -> dict:
    """Flat, JSON-ready view of a technique configuration (for run manifests)."""
    if isinstance(config, SolverSpec):
        return {f.name: getattr(config, f.name) for f in fields(config)}
    out = {f.name: getattr(config, f.name) for f in fields(config) if f.name != "base"}
    out["base"] = config_to_dict(config.base)
    return out


def unmix_pixel(
    library: SpectralLibrary,
    pixel: Pixel,
    technique: str,
    config: TechniqueConfig | None = None,
    tau_model: float = TAU_MODEL,
) -> UnmixResult:
    """Unmix one pixel; ``runtime_s`` is the wall-clock time of the unmixing call."""
    config = config if config is not None else technique_config(technique)
    start = time.perf_counter()
    if isinstance(config, DfsConfig):
        result = dfs_unmix(library, pixel, config, technique, tau_model)
    elif isinstance(config, BmaConfig):
        result = bma_unmix(library, pixel, config, technique, tau_model)
    else:
        fit = solve(library.matrix, pixel.reflectance, config)
        result = make_result(
            pixel.id, technique, library, fit.coefficients, pixel.reflectance,
            pixel.reflectance - fit.residual, tau_model,
            diagnostics={"iterations": fit.iterations, "converged": fit.converged},
        )
    elapsed = time.perf_counter() - start
    return result.with_runtime(elapsed)


def _unmix_worker(pixel, library, technique, config, tau_model):
    return unmix_pixel(library, pixel, technique, config, tau_model)


def run_technique(
    library: SpectralLibrary,
    roi: Roi | Sequence[Pixel],
    technique: str,
    config: TechniqueConfig | None = None,
    tau_model: float = TAU_MODEL,
    jobs: int = 1,
    warmup: bool = True,
) -> list[UnmixResult]:
    """Unmix every pixel; output order follows the input order whatever ``jobs`` is."""
    pixels = list(roi)
    config = config if config is not None else technique_config(technique)
    if pixels and pixels[0].reflectance.size != library.band_count:
        raise ValidationError(
            f"ROI has {pixels[0].reflectance.size} bands, library has {library.band_count}"
        )
    if warmup and pixels:
        # first call pays JIT / cache loading; keep it out of the timings
        unmix_pixel(library, pixels[0], technique, config, tau_model)
    if jobs <= 1 or len(pixels) < 2:
        return [unmix_pixel(library, p, technique, config, tau_model) for p in pixels]
    work = partial(_unmix_worker, library=library, technique=technique, config=config, tau_model=tau_model)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, pixels, chunksize=max(1, len(pixels) // (4 * jobs))))


def run_benchmark(
    library: SpectralLibrary,
    roi: Roi,
    techniques: Sequence[str] = TECHNIQUES,
    overrides: Mapping[str, Mapping] | None = None,
    tau_model: float = TAU_MODEL,
    jobs: int = 1,
) -> dict[str, list[UnmixResult]]:
    overrides = overrides or {}
    out = {}
    for t in techniques:
        check_technique(t)
        out[t] = run_technique(library, roi, t, technique_config(t, overrides.get(t)), tau_model, jobs)
    return out
