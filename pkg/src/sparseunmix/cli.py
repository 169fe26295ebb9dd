"""Command-line entry point: ``sparseunmix {unmix,benchmark,simulate}``.

Exit codes: 0 success, 1 computation failure, 2 usage or validation error.
Settings resolve as built-in defaults < ``--config`` JSON < explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import UnmixError, ValidationError
from .evaluate import (
    TAU_DETECT,
    TAU_MODEL,
    build_report,
    report_csv,
    report_markdown,
    results_csv,
    spectrum_svg,
    taxonomy_csv,
    timings_csv,
)
from .mixsim import make_benchmark_roi
from .speclib import (
    BUNDLED_LIBRARY,
    Roi,
    SpectralLibrary,
    bundled_library_path,
    load_library,
    load_roi,
    load_truth,
    save_roi,
    save_truth,
)
from .techniques import (
    TECHNIQUES,
    check_technique,
    config_to_dict,
    run_technique,
    technique_config,
)

log = logging.getLogger("sparseunmix")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

CONFIG_KEYS = {
    "unmix": {"technique", "params", "tau_model", "jobs"},
    "benchmark": {"techniques", "params", "target", "tau_detect", "tau_model", "jobs"},
    "simulate": {"pixels", "complexity", "snr", "seed", "target", "mixing_kind", "bilinear_coef", "min_abundance"},
}
SIMULATE_DEFAULTS = {
    "pixels": 120, "complexity": "2", "snr": 40.0, "seed": 0, "target": "alunite",
    "mixing_kind": "linear", "bilinear_coef": 0.0, "min_abundance": 0.2,
}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparseunmix", description="Sparse hyperspectral unmixing and benchmarking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    u = sub.add_parser("unmix", help="unmix every pixel of an ROI with one technique")
    u.add_argument("--library", help=f"library CSV (default: bundled {BUNDLED_LIBRARY})")
    u.add_argument("--roi", required=True)
    u.add_argument("--technique")
    u.add_argument("--config", help="JSON file with settings")
    u.add_argument("--out", required=True)
    u.add_argument("--svg", action="store_true", help="write observed-vs-inferred plots")
    u.add_argument("--tau-model", type=float)
    u.add_argument("--jobs", type=int)

    b = sub.add_parser("benchmark", help="run the technique comparison over an ROI")
    b.add_argument("--library", help=f"library CSV (default: bundled {BUNDLED_LIBRARY})")
    b.add_argument("--roi", required=True)
    b.add_argument("--truth")
    b.add_argument("--techniques", help="'all' or a comma-separated list")
    b.add_argument("--target", help="comma-separated target name patterns for detection")
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.add_argument("--svg", action="store_true")
    b.add_argument("--tau-detect", type=float)
    b.add_argument("--tau-model", type=float)
    b.add_argument("--jobs", type=int)

    s = sub.add_parser("simulate", help="generate a synthetic ROI with ground truth")
    s.add_argument("--library", help=f"library CSV (default: bundled {BUNDLED_LIBRARY})")
    s.add_argument("--pixels", type=int)
    s.add_argument("--complexity", help="constituents per pixel, e.g. 2 or 2-3")
    s.add_argument("--snr", type=float, help="dB; 'inf' for noiseless")
    s.add_argument("--seed", type=int)
    s.add_argument("--target")
    s.add_argument("--mixing-kind", choices=("linear", "bilinear"))
    s.add_argument("--bilinear-coef", type=float)
    s.add_argument("--min-abundance", type=float)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    return p


def _read_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: {path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    unknown = set(data) - CONFIG_KEYS[command]
    if unknown:
        raise ValidationError(f"config: unknown key(s) {sorted(unknown)}; allowed: {sorted(CONFIG_KEYS[command])}")
    params = data.get("params", {})
    if not isinstance(params, dict) or not all(isinstance(v, dict) for v in params.values()):
        raise ValidationError("config: 'params' must map technique names to objects")
    return data


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return config.get(key, default)


def _load_library(path: str | None) -> SpectralLibrary:
    return load_library(path if path else bundled_library_path())


def _align(library: SpectralLibrary, roi: Roi, library_path: str | None) -> SpectralLibrary:
    if library.band_count == roi.wavelengths.size and np.allclose(library.wavelengths, roi.wavelengths):
        return library
    log.info("resampling library onto the ROI wavelength axis (%d bands)", roi.wavelengths.size)
    return load_library(library_path or bundled_library_path(), resample_axis=roi.wavelengths)


def _parse_techniques(value) -> list[str]:
    if value is None or value == "all":
        return list(TECHNIQUES)
    items = value.split(",") if isinstance(value, str) else list(value)
    names = [t.strip() for t in items if t.strip()]
    if not names:
        raise ValidationError("techniques: empty list")
    for t in names:
        check_technique(t)
    return names


def _parse_complexity(value) -> int | tuple[int, int]:
    text = str(value)
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            return (lo, hi)
        return int(text)
    except ValueError:
        raise ValidationError(f"complexity: expected N or LO-HI, got {value!r}") from None


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, args: argparse.Namespace, resolved: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config_path": getattr(args, "config", None),
        "inputs": {k: getattr(args, k, None) for k in ("library", "roi", "truth") if hasattr(args, k)},
        "output_dir": str(out),
        "argv": getattr(args, "argv", sys.argv[1:]),
        "resolved": resolved,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_plots(out: Path, roi: Roi, results, prefix: str = "") -> None:
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for r in results:
        svg = spectrum_svg(roi.wavelengths, r.observed, r.inferred, f"{r.pixel_id} {r.technique} rmse={r.rmse:.4g}")
        (plots / f"{prefix}{r.pixel_id}.svg").write_text(svg, encoding="utf-8")


def cmd_unmix(args: argparse.Namespace) -> int:
    config = _read_config(args.config, "unmix")
    technique = _resolve(args, config, "technique")
    if technique is None:
        raise ValidationError("technique: required (flag --technique or config key 'technique')")
    check_technique(technique, allow_baselines=True)
    tau_model = float(_resolve(args, config, "tau_model", TAU_MODEL))
    jobs = int(_resolve(args, config, "jobs", 1))
    tconf = technique_config(technique, config.get("params", {}).get(technique))

    roi = load_roi(args.roi)
    library = _align(_load_library(args.library), roi, args.library)
    results = run_technique(library, roi, technique, tconf, tau_model, jobs)

    out = _out_dir(args.out)
    (out / "results.csv").write_text(results_csv(results, library.names), encoding="utf-8")
    if args.svg:
        _write_plots(out, roi, results)
    _write_manifest(out, "unmix", args, {
        "technique": technique, "tau_model": tau_model, "jobs": jobs, "config": config_to_dict(tconf),
    })
    log.info("unmixed %d pixels with %s -> %s", len(results), technique, out)
    return EXIT_OK


def _target_names(args, config, roi: Roi, truth) -> tuple[str, ...]:
    target = _resolve(args, config, "target")
    if target:
        items = target.split(",") if isinstance(target, str) else list(target)
        return tuple(t.strip() for t in items if t.strip())
    if roi.target_names:
        return tuple(roi.target_names)
    if truth:
        # constituents present in every truth record
        common = set(truth[0].names)
        for t in truth[1:]:
            common &= set(t.names)
        return tuple(sorted(common))
    return ()


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = _read_config(args.config, "benchmark")
    techniques = _parse_techniques(_resolve(args, config, "techniques"))
    tau_detect = float(_resolve(args, config, "tau_detect", TAU_DETECT))
    tau_model = float(_resolve(args, config, "tau_model", TAU_MODEL))
    jobs = int(_resolve(args, config, "jobs", 1))
    params = config.get("params", {})
    for t in params:
        check_technique(t)
    configs = {t: technique_config(t, params.get(t)) for t in techniques}

    roi = load_roi(args.roi)
    truth = load_truth(args.truth) if args.truth else None
    targets = _target_names(args, config, roi, truth)
    if not targets:
        raise ValidationError(
            "target: no target names for detection; pass --target, a ROI sidecar with target_names, or --truth"
        )
    library = _align(_load_library(args.library), roi, args.library)

    results = {}
    for t in techniques:
        log.info("running %s on %d pixels", t, len(roi))
        results[t] = run_technique(library, roi, t, configs[t], tau_model, jobs)
    report = build_report(results, library, targets, truth, tau_detect, tau_model)

    out = _out_dir(args.out)
    (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
    (out / "report.md").write_text(report_markdown(report), encoding="utf-8")
    (out / "timings.csv").write_text(timings_csv(report), encoding="utf-8")
    flat = [r for res in results.values() for r in res]
    (out / "results.csv").write_text(results_csv(flat, library.names), encoding="utf-8")
    for t, rows in report.taxonomy.items():
        (out / f"taxonomy_{t}.csv").write_text(taxonomy_csv(rows), encoding="utf-8")
    if args.svg:
        for t, res in results.items():
            _write_plots(out, roi, res, prefix=f"{t}_")
    _write_manifest(out, "benchmark", args, {
        "techniques": techniques, "target": list(targets), "tau_detect": tau_detect, "tau_model": tau_model,
        "jobs": jobs, "configs": {t: config_to_dict(c) for t, c in configs.items()},
    })
    log.info("report for %d technique(s) -> %s", len(techniques), out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _read_config(args.config, "simulate")
    opts = {k: _resolve(args, config, k, d) for k, d in SIMULATE_DEFAULTS.items()}
    complexity = _parse_complexity(opts["complexity"])
    snr = float(opts["snr"])
    library = _load_library(args.library)
    roi, truth = make_benchmark_roi(
        library,
        n_pixels=int(opts["pixels"]),
        complexity=complexity,
        snr_db=None if np.isinf(snr) else snr,
        seed=int(opts["seed"]),
        target=opts["target"],
        min_abundance=float(opts["min_abundance"]),
        mixing_kind=opts["mixing_kind"],
        bilinear_coef=float(opts["bilinear_coef"]),
    )
    out = _out_dir(args.out)
    save_roi(roi, out / "roi.csv")
    save_truth(truth, out / "truth.csv")
    _write_manifest(out, "simulate", args, opts)
    log.info("simulated %d pixels -> %s", len(roi), out)
    return EXIT_OK


COMMANDS = {"unmix": cmd_unmix, "benchmark": cmd_benchmark, "simulate": cmd_simulate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.argv = list(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"sparseunmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"sparseunmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnmixError as exc:
        print(f"sparseunmix: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
