"""Spectra, spectral libraries, ROIs and ground truth, plus their CSV formats.

Library CSV::

    name,category,formula,<w1>,<w2>,...,<wW>

ROI CSV::

    pixel_id,<w1>,...,<wW>

Ground-truth CSV::

    pixel_id,constituent,abundance,mixing_kind

Wavelengths are in micrometers. Bilinear interaction terms are stored in the
ground-truth file as ``name_i*name_j`` constituents.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ParseError, RangeError, ValidationError

LIBRARY_FIXED_COLUMNS = ("name", "category", "formula")
REFLECTANCE_WARN_MAX = 1.0
MIXING_KINDS = ("linear", "bilinear")
INTERACTION_SEP = "*"

BUNDLED_LIBRARY = "synthetic_library.csv"
BUNDLED_OVERSIZED_LIBRARY = "synthetic_library_481.csv"


def _frozen_array(values: Iterable[float]) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_axis(wavelengths: NDArray[np.float64], what: str = "wavelengths") -> None:
    if wavelengths.ndim != 1 or wavelengths.size == 0:
        raise ValidationError(f"{what} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(wavelengths)):
        raise ValidationError(f"{what} must be finite")
    if np.any(np.diff(wavelengths) <= 0):
        raise ValidationError(f"{what} must be strictly increasing")


def _fmt(x: float) -> str:
    # repr gives the shortest string that parses back to the same double
    return repr(float(x))


@dataclass(frozen=True)
class Spectrum:
    """A named reflectance curve on a strictly increasing wavelength axis (µm)."""

    name: str
    category: str
    formula: str
    wavelengths: NDArray[np.float64]
    reflectance: NDArray[np.float64]

    def __post_init__(self) -> None:
        wl = _frozen_array(self.wavelengths)
        refl = _frozen_array(self.reflectance)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "reflectance", refl)
        _check_axis(wl)
        if refl.shape != wl.shape:
            raise ValidationError(
                f"spectrum {self.name!r}: {refl.size} reflectance values for {wl.size} wavelengths"
            )
        if not np.all(np.isfinite(refl)):
            raise ValidationError(f"spectrum {self.name!r}: reflectance must be finite")
        if refl.size and refl.max() > REFLECTANCE_WARN_MAX:
            warnings.warn(
                f"spectrum {self.name!r} has reflectance up to {refl.max():.4g} (> 1)",
                stacklevel=3,
            )

    @property
    def band_count(self) -> int:
        return int(self.wavelengths.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            self.name == other.name
            and self.category == other.category
            and self.formula == other.formula
            and np.array_equal(self.wavelengths, other.wavelengths)
            and np.array_equal(self.reflectance, other.reflectance)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SpectralLibrary:
    """Ordered spectra sharing one wavelength axis; column ``i`` of :attr:`matrix` is ``spectra[i]``."""

    spectra: tuple[Spectrum, ...]
    _index: dict[str, int] = field(init=False, repr=False)
    _matrix: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        spectra = tuple(self.spectra)
        object.__setattr__(self, "spectra", spectra)
        index: dict[str, int] = {}
        for i, s in enumerate(spectra):
            if s.name in index:
                raise ValidationError(f"duplicate spectrum name {s.name!r}")
            index[s.name] = i
        if spectra:
            axis = spectra[0].wavelengths
            for s in spectra[1:]:
                if not np.array_equal(s.wavelengths, axis):
                    raise ValidationError(
                        f"spectrum {s.name!r} does not share the library wavelength axis"
                    )
            mat = np.column_stack([s.reflectance for s in spectra])
        else:
            mat = np.zeros((0, 0))
        mat.setflags(write=False)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_matrix", mat)

    def __len__(self) -> int:
        return len(self.spectra)

    def __iter__(self):
        return iter(self.spectra)

    def __getitem__(self, key: int | str) -> Spectrum:
        if isinstance(key, str):
            return self.spectra[self.index_of(key)]
        return self.spectra[key]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpectralLibrary):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))

    __hash__ = None  # type: ignore[assignment]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown spectrum name {name!r}") from None

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.spectra]

    @property
    def wavelengths(self) -> NDArray[np.float64]:
        if not self.spectra:
            return _frozen_array([])
        return self.spectra[0].wavelengths

    @property
    def band_count(self) -> int:
        return int(self.wavelengths.size)

    @property
    def matrix(self) -> NDArray[np.float64]:
        """Design matrix of shape (W, N)."""
        return self._matrix

    def matching(self, patterns: Sequence[str]) -> list[int]:
        """Indices of spectra whose name contains any pattern (case-insensitive)."""
        pats = [p.lower() for p in patterns]
        return [i for i, n in enumerate(self.names) if any(p in n.lower() for p in pats)]

    def subset(self, indices: Sequence[int]) -> SpectralLibrary:
        return SpectralLibrary(tuple(self.spectra[i] for i in indices))


@dataclass(frozen=True, eq=False)
class Pixel:
    id: str
    reflectance: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id))
        refl = _frozen_array(self.reflectance)
        if refl.ndim != 1:
            raise ValidationError(f"pixel {self.id!r}: reflectance must be 1-D")
        if not np.all(np.isfinite(refl)):
            raise ValidationError(f"pixel {self.id!r}: reflectance must be finite")
        object.__setattr__(self, "reflectance", refl)


@dataclass(frozen=True, eq=False)
class Roi:
    """A named set of pixels believed to contain a target mineral."""

    name: str
    pixels: tuple[Pixel, ...]
    wavelengths: NDArray[np.float64]
    target_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", tuple(self.pixels))
        object.__setattr__(self, "target_names", tuple(self.target_names))
        wl = _frozen_array(self.wavelengths)
        object.__setattr__(self, "wavelengths", wl)
        if wl.size:
            _check_axis(wl)
        ids = set()
        for p in self.pixels:
            if p.reflectance.size != wl.size:
                raise ValidationError(
                    f"pixel {p.id!r} has {p.reflectance.size} bands, ROI axis has {wl.size}"
                )
            if p.id in ids:
                raise ValidationError(f"duplicate pixel id {p.id!r}")
            ids.add(p.id)

    def __len__(self) -> int:
        return len(self.pixels)

    def __iter__(self):
        return iter(self.pixels)


@dataclass(frozen=True)
class GroundTruth:
    """True composition of one pixel."""

    pixel_id: str
    constituents: tuple[tuple[str, float], ...]
    mixing_kind: str = "linear"
    interactions: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.mixing_kind not in MIXING_KINDS:
            raise ValidationError(f"mixing_kind must be one of {MIXING_KINDS}, got {self.mixing_kind!r}")
        for name, a in self.constituents:
            if a < 0:
                raise ValidationError(f"pixel {self.pixel_id!r}: negative abundance for {name!r}")
        for a_name, b_name, b in self.interactions:
            if b < 0:
                raise ValidationError(
                    f"pixel {self.pixel_id!r}: negative interaction {a_name}{INTERACTION_SEP}{b_name}"
                )

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.constituents]

    def abundance_of(self, name: str) -> float:
        return dict(self.constituents).get(name, 0.0)


def resample(spectrum: Spectrum, axis: Sequence[float]) -> Spectrum:
    """Piecewise-linear interpolation of ``spectrum`` onto ``axis``."""
    new_axis = np.asarray(axis, dtype=np.float64)
    _check_axis(new_axis, "resample axis")
    wl = spectrum.wavelengths
    if new_axis[0] < wl[0] or new_axis[-1] > wl[-1]:
        raise RangeError(
            f"resample axis [{new_axis[0]}, {new_axis[-1]}] outside spectrum "
            f"{spectrum.name!r} range [{wl[0]}, {wl[-1]}]"
        )
    values = np.interp(new_axis, wl, spectrum.reflectance)
    return Spectrum(spectrum.name, spectrum.category, spectrum.formula, new_axis, values)


def _parse_axis(header: list[str], skip: int, path: str) -> NDArray[np.float64]:
    try:
        axis = np.array([float(h) for h in header[skip:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"non-numeric wavelength in header ({exc})", line=1, path=path) from None
    if axis.size == 0:
        raise ParseError("header has no wavelength columns", line=1, path=path)
    try:
        _check_axis(axis, "header wavelengths")
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return axis


def _parse_values(fields: list[str], lineno: int, path: str) -> list[float]:
    try:
        return [float(v) for v in fields]
    except ValueError as exc:
        raise ParseError(f"non-numeric value ({exc})", line=lineno, path=path) from None


def load_library(path: str | Path, resample_axis: Sequence[float] | None = None) -> SpectralLibrary:
    path = str(path)
    spectra: list[Spectrum] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1, path=path)
        if [h.strip().lower() for h in header[:3]] != list(LIBRARY_FIXED_COLUMNS):
            raise ParseError("header must start with name,category,formula", line=1, path=path)
        axis = _parse_axis(header, 3, path)
        width = len(header)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno, path=path)
            name, category, formula = row[0], row[1], row[2]
            if name in seen:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate spectrum name {name!r} (first at line {seen[name]})"
                )
            seen[name] = lineno
            values = _parse_values(row[3:], lineno, path)
            spec = Spectrum(name, category, formula, axis, values)
            if resample_axis is not None:
                spec = resample(spec, resample_axis)
            spectra.append(spec)
    return SpectralLibrary(tuple(spectra))


def save_library(library: SpectralLibrary, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*LIBRARY_FIXED_COLUMNS, *(_fmt(w) for w in library.wavelengths)])
        for s in library:
            writer.writerow([s.name, s.category, s.formula, *(_fmt(v) for v in s.reflectance)])


def load_bundled_library(name: str = BUNDLED_LIBRARY) -> SpectralLibrary:
    """Load one of the synthetic libraries shipped in ``sparseunmix/data``."""
    with resources.as_file(resources.files("sparseunmix") / "data" / name) as p:
        return load_library(p)


def bundled_library_path(name: str = BUNDLED_LIBRARY) -> Path:
    return Path(str(resources.files("sparseunmix") / "data" / name))


def _roi_meta_path(path: Path) -> Path:
    return path.with_suffix(".json")


def load_roi(
    path: str | Path,
    name: str | None = None,
    target_names: Sequence[str] | None = None,
) -> Roi:
    """Read an ROI CSV.

    ``name`` and ``target_names`` default to the values in the sidecar
    ``<stem>.json`` written by :func:`save_roi`, if present.
    """
    path = Path(path)
    meta: dict = {}
    meta_path = _roi_meta_path(path)
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    pixels: list[Pixel] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1, path=str(path))
        if header[0].strip().lower() != "pixel_id":
            raise ParseError("header must start with pixel_id", line=1, path=str(path))
        axis = _parse_axis(header, 1, str(path))
        width = len(header)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno, path=str(path))
            pixels.append(Pixel(row[0], _parse_values(row[1:], lineno, str(path))))
    return Roi(
        name=name or meta.get("name", path.stem),
        pixels=tuple(pixels),
        wavelengths=axis,
        target_names=tuple(target_names if target_names is not None else meta.get("target_names", ())),
    )


def save_roi(roi: Roi, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pixel_id", *(_fmt(w) for w in roi.wavelengths)])
        for p in roi:
            writer.writerow([p.id, *(_fmt(v) for v in p.reflectance)])
    meta = {"name": roi.name, "target_names": list(roi.target_names)}
    _roi_meta_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_truth(path: str | Path) -> list[GroundTruth]:
    path = str(path)
    rows: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "pixel_id", "constituent", "abundance", "mixing_kind"
        ]:
            raise ParseError("header must be pixel_id,constituent,abundance,mixing_kind", line=1, path=path)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno, path=path)
            pid, constituent, value, kind = row
            (abundance,) = _parse_values([value], lineno, path)
            rec = rows.setdefault(pid, {"kind": kind, "constituents": [], "interactions": []})
            if rec["kind"] != kind:
                raise ParseError(f"pixel {pid!r} mixes mixing kinds", line=lineno, path=path)
            if INTERACTION_SEP in constituent:
                a, b = constituent.split(INTERACTION_SEP, 1)
                rec["interactions"].append((a, b, abundance))
            else:
                rec["constituents"].append((constituent, abundance))
    return [
        GroundTruth(pid, tuple(r["constituents"]), r["kind"], tuple(r["interactions"]))
        for pid, r in rows.items()
    ]


def save_truth(truth: Sequence[GroundTruth], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pixel_id", "constituent", "abundance", "mixing_kind"])
        for gt in truth:
            for name, a in gt.constituents:
                writer.writerow([gt.pixel_id, name, _fmt(a), gt.mixing_kind])
            for a_name, b_name, b in gt.interactions:
                writer.writerow([gt.pixel_id, f"{a_name}{INTERACTION_SEP}{b_name}", _fmt(b), gt.mixing_kind])
