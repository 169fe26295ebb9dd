"""Synthetic mixtures with known ground truth, and the bundled synthetic library.

Real AVIRIS scenes and the USGS library cannot ship with the package, so
benchmarks run on Gaussian-absorption-band spectra grouped into mineral
families, mixed linearly (``y = sum a_i s_i + e``) or bilinearly
(``y = sum a_i s_i + sum b_ij s_i*s_j + e``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError
from .speclib import GroundTruth, Pixel, Roi, SpectralLibrary, Spectrum

DEFAULT_ROI_PIXELS = 120
DEFAULT_MIN_ABUNDANCE = 0.2

# mineral, category, formula, absorption bands as (center um, depth, width um), variants in the 40-spectrum library
MINERALS: list[tuple[str, str, str, list[tuple[float, float, float]], int]] = [
    ("alunite", "Sulfate", "(Na,K)Al3(SO4)2(OH)6", [(2.165, 0.30, 0.018), (2.320, 0.22, 0.022)], 4),
    ("ammonioalunite", "Sulfate", "(NH4)Al3(SO4)2(OH)6", [(2.120, 0.22, 0.025), (2.180, 0.18, 0.015), (2.320, 0.15, 0.020)], 1),
    ("jarosite", "Sulfate", "KFe3(SO4)2(OH)6", [(2.265, 0.35, 0.020)], 2),
    ("mascagnite", "Sulfate", "(NH4)2SO4", [(2.040, 0.40, 0.035), (2.215, 0.25, 0.030)], 1),
    ("gypsum", "Sulfate", "CaSO4.2H2O", [(2.215, 0.20, 0.025), (2.265, 0.22, 0.020), (2.480, 0.30, 0.040)], 2),
    ("kaolinite", "Phyllosilicate", "Al2Si2O5(OH)4", [(2.165, 0.22, 0.012), (2.208, 0.35, 0.014), (2.385, 0.12, 0.020)], 4),
    ("dickite", "Phyllosilicate", "Al2Si2O5(OH)4", [(2.180, 0.28, 0.012), (2.208, 0.32, 0.012)], 1),
    ("halloysite", "Phyllosilicate", "Al2Si2O5(OH)4.2H2O", [(2.170, 0.15, 0.018), (2.210, 0.30, 0.020)], 1),
    ("muscovite", "Phyllosilicate", "KAl2(AlSi3O10)(OH)2", [(2.200, 0.35, 0.016), (2.350, 0.25, 0.020), (2.440, 0.18, 0.018)], 2),
    ("montmorillonite", "Phyllosilicate", "(Na,Ca)0.33(Al,Mg)2Si4O10(OH)2.nH2O", [(2.210, 0.30, 0.025)], 2),
    ("cookeite", "Phyllosilicate", "LiAl4(Si3Al)O10(OH)8", [(2.190, 0.20, 0.015), (2.360, 0.18, 0.025)], 1),
    ("hypersthene", "Inosilicate", "(Mg,Fe)2Si2O6", [(2.250, 0.30, 0.150)], 2),
    ("diopside", "Inosilicate", "CaMgSi2O6", [(2.320, 0.28, 0.120)], 1),
    ("tremolite", "Inosilicate", "Ca2Mg5Si8O22(OH)2", [(2.315, 0.40, 0.012), (2.390, 0.20, 0.015)], 2),
    ("epidote", "Sorosilicate", "Ca2(Al,Fe)3(SiO4)3(OH)", [(2.255, 0.25, 0.018), (2.340, 0.30, 0.020)], 2),
    ("elbaite", "Cyclosilicate", "Na(Li,Al)3Al6(BO3)3Si6O18(OH)4", [(2.205, 0.20, 0.025), (2.245, 0.15, 0.020), (2.300, 0.20, 0.030)], 2),
    ("gibbsite", "Hydroxide", "Al(OH)3", [(2.270, 0.30, 0.030), (2.350, 0.15, 0.025)], 2),
    ("calcite", "Carbonate", "CaCO3", [(2.340, 0.45, 0.035)], 2),
    ("dolomite", "Carbonate", "CaMg(CO3)2", [(2.315, 0.45, 0.035)], 2),
    ("halite", "Halide", "NaCl", [], 1),
    ("hematite", "Oxide", "Fe2O3", [(2.000, 0.10, 0.250)], 1),
    ("goethite", "Hydroxide", "FeO(OH)", [(2.050, 0.15, 0.300)], 1),
    ("buddingtonite", "Tectosilicate", "NH4AlSi3O8", [(2.020, 0.25, 0.030), (2.120, 0.30, 0.030)], 1),
]


def _synthetic_spectrum(
    mineral: str,
    bands: list[tuple[float, float, float]],
    axis: NDArray[np.float64],
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    level = rng.uniform(0.40, 0.80)
    slope = rng.uniform(-0.40, 0.20)
    refl = level + slope * (axis - axis.mean())
    for center, depth, width in bands:
        c = center + rng.normal(0.0, 0.004)
        d = depth * rng.uniform(0.70, 1.30)
        w = width * rng.uniform(0.85, 1.15)
        refl = refl * (1.0 - d * np.exp(-0.5 * ((axis - c) / w) ** 2))
    return np.round(np.clip(refl, 0.01, None), 6)


def make_synthetic_library(
    n_spectra: int | None = None,
    n_bands: int = 50,
    wl_min: float = 2.0,
    wl_max: float = 2.5,
    seed: int = 2024,
) -> SpectralLibrary:
    """Deterministic library of mineral-like spectra on ``n_bands`` bands.

    With ``n_spectra=None`` each mineral gets its listed variant count (40
    total). Larger requests cycle through the minerals adding variants.
    """
    axis = np.round(np.linspace(wl_min, wl_max, n_bands), 6)
    rng = np.random.default_rng(seed)
    counts = [m[4] for m in MINERALS]
    if n_spectra is not None:
        if n_spectra < 1:
            raise ValidationError("n_spectra must be >= 1")
        counts = [0] * len(MINERALS)
        for i in range(n_spectra):
            counts[i % len(MINERALS)] += 1
    spectra = []
    for (mineral, category, formula, bands, _), count in zip(MINERALS, counts):
        for v in range(count):
            refl = _synthetic_spectrum(mineral, bands, axis, rng)
            spectra.append(Spectrum(f"{mineral}_v{v + 1}", category, formula, axis, refl))
    return SpectralLibrary(tuple(spectra))


@dataclass(frozen=True)
class MixSpec:
    constituents: tuple[tuple[str, float], ...]
    mixing_kind: str = "linear"
    bilinear_terms: tuple[tuple[str, str, float], ...] = ()
    snr_db: float | None = None
    seed: int = 0
    pixel_id: str = "0"

    def __post_init__(self) -> None:
        object.__setattr__(self, "constituents", tuple(tuple(c) for c in self.constituents))
        object.__setattr__(self, "bilinear_terms", tuple(tuple(t) for t in self.bilinear_terms))
        if self.mixing_kind not in ("linear", "bilinear"):
            raise ValidationError(f"unknown mixing_kind {self.mixing_kind!r}")
        for name, a in self.constituents:
            if a < 0:
                raise ValidationError(f"abundance of {name!r} must be >= 0")
        for a_name, b_name, b in self.bilinear_terms:
            if b < 0:
                raise ValidationError(f"bilinear coefficient {a_name}*{b_name} must be >= 0")


def add_noise(signal: NDArray[np.float64], snr_db: float | None, rng: np.random.Generator) -> NDArray[np.float64]:
    """White Gaussian noise at ``10*log10(mean(signal^2) / sigma^2) = snr_db``."""
    if snr_db is None:
        return signal
    power = float(np.mean(signal * signal))
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return signal + rng.normal(0.0, sigma, size=signal.shape)


def _linear_part(library: SpectralLibrary, spec: MixSpec) -> NDArray[np.float64]:
    y = np.zeros(library.band_count)
    for name, a in spec.constituents:
        y = y + a * library[name].reflectance
    return y


def _check_names(library: SpectralLibrary, spec: MixSpec) -> None:
    names = [n for n, _ in spec.constituents]
    names += [n for t in spec.bilinear_terms for n in t[:2]]
    for n in names:
        if n not in library:
            raise ValidationError(f"unknown constituent {n!r}")


def mix_linear(library: SpectralLibrary, spec: MixSpec) -> tuple[Pixel, GroundTruth]:
    if spec.mixing_kind != "linear":
        raise ValidationError("mix_linear needs mixing_kind='linear'")
    _check_names(library, spec)
    rng = np.random.default_rng(spec.seed)
    y = add_noise(_linear_part(library, spec), spec.snr_db, rng)
    return Pixel(spec.pixel_id, y), GroundTruth(spec.pixel_id, spec.constituents, "linear")


def mix_bilinear(library: SpectralLibrary, spec: MixSpec) -> tuple[Pixel, GroundTruth]:
    if spec.mixing_kind != "bilinear":
        raise ValidationError("mix_bilinear needs mixing_kind='bilinear'")
    _check_names(library, spec)
    rng = np.random.default_rng(spec.seed)
    y = _linear_part(library, spec)
    for a_name, b_name, b in spec.bilinear_terms:
        y = y + b * (library[a_name].reflectance * library[b_name].reflectance)
    y = add_noise(y, spec.snr_db, rng)
    truth = GroundTruth(spec.pixel_id, spec.constituents, "bilinear", spec.bilinear_terms)
    return Pixel(spec.pixel_id, y), truth


def sample_abundances(k: int, rng: np.random.Generator, min_abundance: float = 0.0) -> NDArray[np.float64]:
    """Uniform draw from the simplex truncated to ``a_i >= min_abundance``."""
    if k * min_abundance > 1.0:
        raise ValidationError(f"min_abundance {min_abundance} infeasible for {k} constituents")
    free = 1.0 - k * min_abundance
    return min_abundance + free * rng.dirichlet(np.ones(k))


def make_benchmark_roi(
    library: SpectralLibrary,
    n_pixels: int = DEFAULT_ROI_PIXELS,
    complexity: int | tuple[int, int] = 2,
    snr_db: float | None = 40.0,
    seed: int = 0,
    target: str = "alunite",
    min_abundance: float = DEFAULT_MIN_ABUNDANCE,
    mixing_kind: str = "linear",
    bilinear_coef: float = 0.0,
    name: str | None = None,
) -> tuple[Roi, list[GroundTruth]]:
    """Sample an ROI where every pixel contains one spectrum of the ``target`` mineral.

    ``complexity`` is a constituent count or an inclusive ``(lo, hi)`` range
    drawn per pixel. The other constituents come from spectra that do not
    match ``target``. Bilinear ROIs add ``bilinear_coef * s_i*s_j`` for every
    constituent pair.
    """
    lo, hi = (complexity, complexity) if isinstance(complexity, int) else complexity
    if lo < 1 or hi < lo:
        raise ValidationError(f"invalid complexity {complexity!r}")
    targets = library.matching([target])
    if not targets:
        raise ValidationError(f"no library spectrum matches target {target!r}")
    others = [i for i in range(len(library)) if i not in set(targets)]
    if hi - 1 > len(others):
        raise ValidationError(f"library has too few non-target spectra for complexity {hi}")
    if mixing_kind not in ("linear", "bilinear"):
        raise ValidationError(f"unknown mixing_kind {mixing_kind!r}")
    if n_pixels < 0:
        raise ValidationError("n_pixels must be >= 0")

    rng = np.random.default_rng(seed)
    S = library.matrix
    pixels, truth = [], []
    width = len(str(max(n_pixels - 1, 0)))
    for p in range(n_pixels):
        k = int(rng.integers(lo, hi + 1))
        members = [targets[int(rng.integers(len(targets)))]]
        members += [others[i] for i in rng.choice(len(others), size=k - 1, replace=False)]
        abund = sample_abundances(k, rng, min_abundance)
        y = S[:, members] @ abund
        terms = []
        if mixing_kind == "bilinear":
            for i in range(k):
                for j in range(i + 1, k):
                    y = y + bilinear_coef * S[:, members[i]] * S[:, members[j]]
                    terms.append((library[members[i]].name, library[members[j]].name, float(bilinear_coef)))
        y = add_noise(y, snr_db, rng)
        pid = f"px{p:0{width}d}"
        pixels.append(Pixel(pid, y))
        truth.append(
            GroundTruth(
                pid,
                tuple((library[m].name, float(a)) for m, a in zip(members, abund)),
                mixing_kind,
                tuple(terms),
            )
        )
    roi = Roi(
        name=name or f"synthetic-{target}",
        pixels=tuple(pixels),
        wavelengths=library.wavelengths,
        target_names=(target,),
    )
    return roi, truth
