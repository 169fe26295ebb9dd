"""Per-pixel results, ROI-level metrics, the mineral taxonomy, and report writers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError
from .speclib import GroundTruth, SpectralLibrary

TAU_DETECT = 0.1
TAU_MODEL = 0.01


@dataclass(frozen=True, eq=False)
class UnmixResult:
    """Outcome of unmixing one pixel with one technique.

    ``abundances`` holds a value for every library spectrum (linear terms
    only); quadratic-model interaction mass is kept apart in ``interactions``.
    """

    pixel_id: str
    technique: str
    abundances: dict[str, float]
    inferred: NDArray[np.float64]
    observed: NDArray[np.float64]
    rmse: float
    runtime_s: float = 0.0
    tau_model: float = TAU_MODEL
    interactions: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def selected(self) -> tuple[str, ...]:
        return tuple(n for n, a in self.abundances.items() if a > self.tau_model)

    def with_runtime(self, runtime_s: float) -> "UnmixResult":
        return UnmixResult(
            self.pixel_id, self.technique, self.abundances, self.inferred, self.observed,
            self.rmse, runtime_s, self.tau_model, self.interactions, self.diagnostics,
        )


def make_result(
    pixel_id: str,
    technique: str,
    library: SpectralLibrary,
    coefficients: NDArray[np.float64],
    observed: NDArray[np.float64],
    inferred: NDArray[np.float64] | None = None,
    tau_model: float = TAU_MODEL,
    interactions: Mapping[str, float] | None = None,
    diagnostics: dict | None = None,
) -> UnmixResult:
    """Build an :class:`UnmixResult` from a full-library coefficient vector."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if inferred is None:
        inferred = library.matrix @ coefficients
    return UnmixResult(
        pixel_id=pixel_id,
        technique=technique,
        abundances={n: float(a) for n, a in zip(library.names, coefficients)},
        inferred=np.asarray(inferred, dtype=np.float64),
        observed=np.asarray(observed, dtype=np.float64),
        rmse=rmse(observed, inferred),
        tau_model=tau_model,
        interactions=dict(interactions or {}),
        diagnostics=dict(diagnostics or {}),
    )


def rmse(observed, inferred) -> float:
    o = np.asarray(observed, dtype=np.float64)
    p = np.asarray(inferred, dtype=np.float64)
    if o.shape != p.shape:
        raise ValidationError(f"length mismatch: {o.shape} vs {p.shape}")
    if o.size == 0:
        return 0.0
    d = o - p
    return float(np.sqrt(np.mean(d * d)))


def _matches(name: str, patterns: Sequence[str]) -> bool:
    low = name.lower()
    return any(p.lower() in low for p in patterns)


def detection_rate(results: Sequence[UnmixResult], target_names: Sequence[str], tau_detect: float = TAU_DETECT) -> float:
    """Fraction of pixels with any target-matching spectrum above ``tau_detect``."""
    if not results:
        raise ValidationError("detection_rate needs at least one result")
    hits = sum(
        any(a > tau_detect and _matches(n, target_names) for n, a in r.abundances.items())
        for r in results
    )
    return hits / len(results)


def model_size(result: UnmixResult, tau_model: float = TAU_MODEL) -> int:
    return sum(1 for a in result.abundances.values() if a > tau_model)


@dataclass(frozen=True)
class TaxonomyRow:
    name: str
    category: str
    formula: str
    frequency: float
    mean_abundance: float


def taxonomy(results: Sequence[UnmixResult], library: SpectralLibrary, tau_model: float = TAU_MODEL) -> list[TaxonomyRow]:
    """Selection frequency and mean abundance-when-selected per constituent.

    Frequencies are over all pixels, including ones whose model is empty.
    """
    counts: dict[str, int] = {}
    sums: dict[str, float] = {}
    for r in results:
        for n, a in r.abundances.items():
            if a > tau_model:
                counts[n] = counts.get(n, 0) + 1
                sums[n] = sums.get(n, 0.0) + a
    total = len(results)
    rows = []
    for n, c in counts.items():
        if n in library:
            spec = library[n]
            category, formula = spec.category, spec.formula
        else:
            category, formula = "unknown", ""
        rows.append(TaxonomyRow(n, category, formula, c / total, sums[n] / c))
    rows.sort(key=lambda row: (-row.frequency, row.name))
    return rows


def abundance_error(result: UnmixResult, truth: GroundTruth) -> float:
    """Mean absolute abundance error over all library spectra (synthetic data only)."""
    true = dict(truth.constituents)
    names = set(result.abundances) | set(true)
    return float(np.mean([abs(result.abundances.get(n, 0.0) - true.get(n, 0.0)) for n in sorted(names)]))


@dataclass(frozen=True)
class TechniqueSummary:
    technique: str
    n_pixels: int
    rmse_mean: float
    rmse_std: float
    model_size_mean: float
    runtime_mean_s: float
    detection_rate: float | None
    abundance_mae: float | None = None


@dataclass
class BenchmarkReport:
    rows: list[TechniqueSummary]
    taxonomy: dict[str, list[TaxonomyRow]]
    tau_detect: float = TAU_DETECT
    tau_model: float = TAU_MODEL

    def row(self, technique: str) -> TechniqueSummary:
        for r in self.rows:
            if r.technique == technique:
                return r
        raise KeyError(technique)


def summarize(
    technique: str,
    results: Sequence[UnmixResult],
    target_names: Sequence[str] | None = None,
    truth: Sequence[GroundTruth] | None = None,
    tau_detect: float = TAU_DETECT,
    tau_model: float = TAU_MODEL,
) -> TechniqueSummary:
    if not results:
        raise ValidationError(f"no results for technique {technique!r}")
    errs = np.array([r.rmse for r in results])
    sizes = np.array([model_size(r, tau_model) for r in results], dtype=float)
    mae = None
    if truth is not None:
        by_id = {t.pixel_id: t for t in truth}
        missing = [r.pixel_id for r in results if r.pixel_id not in by_id]
        if missing:
            raise ValidationError(f"ground truth missing for pixels {missing[:5]}")
        mae = float(np.mean([abundance_error(r, by_id[r.pixel_id]) for r in results]))
    return TechniqueSummary(
        technique=technique,
        n_pixels=len(results),
        rmse_mean=float(errs.mean()),
        rmse_std=float(errs.std()),
        model_size_mean=float(sizes.mean()),
        runtime_mean_s=float(np.mean([r.runtime_s for r in results])),
        detection_rate=detection_rate(results, target_names, tau_detect) if target_names else None,
        abundance_mae=mae,
    )


def build_report(
    results_by_technique: Mapping[str, Sequence[UnmixResult]],
    library: SpectralLibrary,
    target_names: Sequence[str] | None = None,
    truth: Sequence[GroundTruth] | None = None,
    tau_detect: float = TAU_DETECT,
    tau_model: float = TAU_MODEL,
) -> BenchmarkReport:
    rows = [
        summarize(t, res, target_names, truth, tau_detect, tau_model)
        for t, res in results_by_technique.items()
    ]
    tax = {t: taxonomy(res, library, tau_model) for t, res in results_by_technique.items()}
    return BenchmarkReport(rows, tax, tau_detect, tau_model)


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def report_csv(report: BenchmarkReport) -> str:
    """Deterministic per-technique metrics; wall-clock runtimes go to :func:`timings_csv`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["technique", "n_pixels", "rmse_mean", "rmse_std", "model_size_mean", "detection_rate", "abundance_mae"])
    for r in report.rows:
        w.writerow([r.technique, r.n_pixels, _num(r.rmse_mean), _num(r.rmse_std),
                    _num(r.model_size_mean), _num(r.detection_rate), _num(r.abundance_mae)])
    return buf.getvalue()


def timings_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["technique", "runtime_mean_s"])
    for r in report.rows:
        w.writerow([r.technique, _num(r.runtime_mean_s)])
    return buf.getvalue()


def report_markdown(report: BenchmarkReport) -> str:
    lines = [
        "| Technique | RMSE Mean | RMSE Std | Model Size | Runtime (s) | Detection |",
        "|---|---:|---:|---:|---:|---:|",
    ]
    for r in report.rows:
        det = "-" if r.detection_rate is None else f"{r.detection_rate:.4f}"
        lines.append(
            f"| {r.technique} | {r.rmse_mean:.4f} | {r.rmse_std:.4f} | {r.model_size_mean:.4f} "
            f"| {r.runtime_mean_s:.4f} | {det} |"
        )
    lines.append("")
    lines.append(f"Detection threshold {report.tau_detect}; model-size threshold {report.tau_model}.")
    if any(r.abundance_mae is not None for r in report.rows):
        lines.append("")
        lines.append("Abundance MAE against synthetic ground truth (not part of the original comparison):")
        lines.append("")
        for r in report.rows:
            if r.abundance_mae is not None:
                lines.append(f"- {r.technique}: {r.abundance_mae:.6f}")
    return "\n".join(lines) + "\n"


def taxonomy_csv(rows: Sequence[TaxonomyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "category", "formula", "frequency", "abundance"])
    for r in rows:
        w.writerow([r.name, r.category, r.formula, _num(r.frequency), _num(r.mean_abundance)])
    return buf.getvalue()


def results_csv(results: Sequence[UnmixResult], names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pixel_id", "technique", "rmse", "runtime_s", "model_size", "selected", *names])
    for r in results:
        w.writerow([
            r.pixel_id, r.technique, _num(r.rmse), _num(r.runtime_s), model_size(r, r.tau_model),
            ";".join(r.selected), *(_num(r.abundances.get(n, 0.0)) for n in names),
        ])
    return buf.getvalue()


def spectrum_svg(
    wavelengths,
    observed,
    inferred,
    title: str = "",
    width: int = 640,
    height: int = 360,
) -> str:
    """Observed (solid) and inferred (dashed) spectra as a standalone SVG."""
    wl = np.asarray(wavelengths, dtype=float)
    obs = np.asarray(observed, dtype=float)
    inf = np.asarray(inferred, dtype=float)
    pad = 40
    lo = float(min(obs.min(), inf.min()))
    hi = float(max(obs.max(), inf.max()))
    if math.isclose(hi, lo):
        hi = lo + 1.0
    x0, x1 = float(wl[0]), float(wl[-1]) if wl.size > 1 else float(wl[0]) + 1.0

    def pts(v):
        xs = pad + (wl - x0) / (x1 - x0) * (width - 2 * pad)
        ys = height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    esc = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{pad}" y="{pad // 2}" font-size="12" font-family="sans-serif">{esc}</text>\n'
        f'<text x="{pad}" y="{height - 10}" font-size="10" font-family="sans-serif">{x0:g} um</text>\n'
        f'<text x="{width - pad}" y="{height - 10}" font-size="10" font-family="sans-serif" text-anchor="end">{x1:g} um</text>\n'
        f'<polyline fill="none" stroke="#1f4e9c" stroke-width="2" points="{pts(obs)}"/>\n'
        f'<polyline fill="none" stroke="#c0392b" stroke-width="1.5" stroke-dasharray="5,3" points="{pts(inf)}"/>\n'
        "</svg>\n"
    )
