"""Command-line interface: ``pnlm {add-noise,denoise,metrics,validate,benchmark}``."""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import validation
from .denoise import METHODS, default_threads, denoise, make_config, method_noise
from .image import add_gaussian_noise, generate_checkerboard, noise_field, psnr, ssim
from .pgm import PGMError, load_pgm, save_pgm
from .stats import PatchGeometry, build_distribution_table

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_SIGMAS = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)


class UsageError(Exception):
    pass


def _odd_side(text):
    value = int(text)
    if value < 1 or value % 2 == 0:
        raise argparse.ArgumentTypeError(f"expected a positive odd integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _int_list(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _float_list(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _emit_json(obj):
    print(json.dumps(obj, sort_keys=True))


# --- add-noise -------------------------------------------------------------

def cmd_add_noise(args):
    clean = load_pgm(args.input)
    noise = noise_field(clean.shape, args.sigma, args.seed)
    noisy = add_gaussian_noise(clean, args.sigma, args.seed)
    save_pgm(noisy, args.out, binary=not args.ascii)
    _emit_json({"sigma": args.sigma, "seed": args.seed, "sample_sigma": float(noise.std())})
    return EXIT_OK


# --- denoise ---------------------------------------------------------------

def cmd_denoise(args):
    if args.reject != "off" and not args.method.startswith("pnlm"):
        raise UsageError(f"--reject {args.reject} requires a probabilistic method (pnlm-*), got {args.method}")
    noisy = load_pgm(args.input)
    alpha = args.alpha if args.reject != "off" else None
    config = make_config(
        noisy,
        method=args.method,
        patch_side=args.patch,
        search_side=args.search,
        sigma=None if args.estimate_sigma else args.sigma,
        rho=args.rho,
        h_factor=args.h_factor,
        reject=args.reject,
        alpha=alpha,
    )
    out, stats = denoise(noisy, config, threads=default_threads())
    save_pgm(out, args.out)
    if args.method_noise_out:
        save_pgm(method_noise(noisy, out), args.method_noise_out)
    if args.stats_out:
        _write_text(args.stats_out, stats.to_json() + "\n")
    _emit_json({"method": args.method, **json.loads(stats.to_json())})
    return EXIT_OK


# --- metrics ---------------------------------------------------------------

def cmd_metrics(args):
    ref = load_pgm(args.reference)
    test = load_pgm(args.test)
    value = psnr(ref, test)
    _emit_json({"psnr": value if np.isfinite(value) else "inf", "ssim": ssim(ref, test)})
    return EXIT_OK


# --- validate --------------------------------------------------------------

def _representative_offsets(geometry):
    """One canonical offset (0 <= dx <= dy) per distinct variance value."""
    seen = {}
    s = geometry.search_radius
    for dy in range(0, s + 1):
        for dx in range(0, dy + 1):
            if (dy, dx) == (0, 0):
                continue
            var = 2 * geometry.patch_size + (
                max(0, geometry.patch_side - dy) * max(0, geometry.patch_side - dx)
            )
            seen.setdefault(var, (dy, dx))
    return [seen[v] for v in sorted(seen)]


def cmd_validate(args):
    if args.samples < 5 * args.bins:
        raise UsageError(
            f"--samples {args.samples} is insufficient for a {args.bins}-bin GOF test "
            f"(expected count per bin {args.samples / args.bins:.2f} < 5)"
        )
    os.makedirs(args.out_dir, exist_ok=True)
    for p in args.patch_sides:
        for s in args.search_sides:
            geometry = PatchGeometry.from_sides(p, s)
            tag = f"p{p}_s{s}"
            _write_text(os.path.join(args.out_dir, f"variance_map_{tag}.csv"),
                        validation.variance_map_csv(geometry))
            _write_text(os.path.join(args.out_dir, f"distribution_table_{tag}.csv"),
                        validation.distribution_table_csv(geometry))

    matrix, reports = validation.table1_run(
        args.patch_sides, args.search_sides, args.samples, args.seed, args.bins
    )
    _write_text(os.path.join(args.out_dir, "gof_reports.csv"), validation.gof_reports_csv(reports))
    _write_text(os.path.join(args.out_dir, "table1.csv"),
                validation.table1_csv(matrix, args.patch_sides, args.search_sides))

    if args.histograms:
        for p in args.patch_sides:
            geometry = PatchGeometry.from_sides(p, min(args.search_sides))
            table = build_distribution_table(geometry)
            for offset in _representative_offsets(geometry):
                samples = validation.sample_patch_difference(offset, geometry, args.samples, args.seed)
                hist = validation.histogram_density(samples, table[offset])
                name = f"histogram_p{p}_dy{offset[0]}_dx{offset[1]}.csv"
                _write_text(os.path.join(args.out_dir, name), validation.histogram_csv(*hist))

    _emit_json({
        "cells": int(matrix.size),
        "min_averaged_p_value": float(matrix.min()),
        "cells_above_0.05": int(np.count_nonzero(matrix > 0.05)),
        "out_dir": args.out_dir,
    })
    return EXIT_OK


# --- benchmark -------------------------------------------------------------

def parse_synthetic(spec):
    """``checker[:WxH[:block[:low:high]]]`` -> image."""
    parts = spec.split(":")
    if parts[0] != "checker":
        raise ValueError(f"unknown synthetic generator {parts[0]!r}")
    width, height, block, low, high = 128, 128, 16, 64.0, 192.0
    if len(parts) > 1:
        width, height = (int(v) for v in parts[1].lower().split("x"))
    if len(parts) > 2:
        block = int(parts[2])
    if len(parts) > 3:
        if len(parts) != 5:
            raise ValueError(f"checker spec needs both levels: {spec!r}")
        low, high = float(parts[3]), float(parts[4])
    return generate_checkerboard(width, height, block, low, high)


def _load_benchmark_image(item):
    if item.startswith("checker"):
        return parse_synthetic(item)
    return load_pgm(item)


def _benchmark_spec(args):
    spec = {}
    if args.spec:
        with open(args.spec) as fh:
            spec = json.load(fh)
    images = args.images or spec.get("images") or ["checker:128x128:16:64:192"]
    sigmas = args.sigmas or spec.get("sigmas") or list(DEFAULT_SIGMAS)
    methods = args.methods or spec.get("methods") or list(METHODS)
    realizations = args.realizations if args.realizations is not None else spec.get("realizations", 10)
    base_seed = args.base_seed if args.base_seed is not None else spec.get("base_seed", 0)
    patch = args.patch or spec.get("patch", 7)
    search = args.search or spec.get("search", 21)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods: {', '.join(bad)}")
    if int(realizations) < 1 or not sigmas:
        raise UsageError("realizations must be >= 1 and sigmas nonempty")
    return images, [float(s) for s in sigmas], methods, int(realizations), int(base_seed), patch, search


def run_benchmark(images, sigmas, methods, realizations, base_seed, patch=7, search=21, workers=1):
    """Score every (image, sigma, method, realization) tuple.

    Returns a list of dicts ordered by tuple index. Realization ``i`` uses
    seed ``base_seed + i`` for every method, so comparisons are paired.
    """
    missing = [im for im in images if not im.startswith("checker") and not os.path.exists(im)]
    if missing:
        raise FileNotFoundError("missing images: " + ", ".join(missing))
    cleans = {im: _load_benchmark_image(im) for im in images}
    jobs = [
        (im, sigma, method, i)
        for im in images
        for sigma in sigmas
        for method in methods
        for i in range(realizations)
    ]

    def work(job):
        im, sigma, method, i = job
        clean = cleans[im]
        noisy = add_gaussian_noise(clean, sigma, base_seed + i)
        config = make_config(noisy, method, patch, search, sigma=sigma)
        out, _ = denoise(noisy, config, threads=1)
        return {
            "image": im, "sigma": sigma, "method": method, "realization": i,
            "seed": base_seed + i, "psnr": psnr(clean, out), "ssim": ssim(clean, out),
        }

    if workers <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, jobs))


def _sigma_label(s):
    return f"{s:g}"


def benchmark_tables(runs, images, sigmas, methods):
    """Table-II shaped CSV: one row per (image, metric, method), one column per sigma."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image", "metric", "method"] + [_sigma_label(s) for s in sigmas])
    for im in images:
        for metric in ("psnr", "ssim"):
            for method in methods:
                row = [im, metric, method]
                for s in sigmas:
                    vals = [r[metric] for r in runs
                            if r["image"] == im and r["method"] == method and r["sigma"] == s]
                    row.append(repr(float(np.mean(vals))))
                writer.writerow(row)
    return buf.getvalue()


def runs_csv(runs):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ["image", "sigma", "method", "realization", "seed", "psnr", "ssim"]
    writer.writerow(cols)
    for r in runs:
        writer.writerow([r["image"], _sigma_label(r["sigma"]), r["method"], r["realization"],
                         r["seed"], repr(float(r["psnr"])), repr(float(r["ssim"]))])
    return buf.getvalue()


def cmd_benchmark(args):
    images, sigmas, methods, realizations, base_seed, patch, search = _benchmark_spec(args)
    runs = run_benchmark(images, sigmas, methods, realizations, base_seed, patch, search,
                         workers=default_threads())
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text(os.path.join(args.out_dir, "table.csv"), benchmark_tables(runs, images, sigmas, methods))
    _write_text(os.path.join(args.out_dir, "runs.csv"), runs_csv(runs))
    _emit_json({"runs": len(runs), "out_dir": args.out_dir})
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="pnlm", description="Non-local means and probabilistic NLM denoising.")
    parser.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add-noise", help="add seeded Gaussian noise to a PGM")
    p.add_argument("input")
    p.add_argument("--sigma", type=_positive_float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("denoise", help="denoise a PGM")
    p.add_argument("input")
    p.add_argument("--method", choices=sorted(METHODS), default="pnlm-mean")
    p.add_argument("--patch", type=_odd_side, default=7, help="patch side length (odd)")
    p.add_argument("--search", type=_odd_side, default=21, help="search region side length (odd)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sigma", type=_positive_float)
    group.add_argument("--estimate-sigma", action="store_true")
    p.add_argument("--rho", type=_positive_float, default=1.0)
    p.add_argument("--h-factor", type=_positive_float, default=1.0)
    p.add_argument("--reject", choices=["off", "upper", "two-sided"], default="off")
    p.add_argument("--alpha", type=float, default=0.999)
    p.add_argument("--out", required=True)
    p.add_argument("--stats-out")
    p.add_argument("--method-noise-out")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="PSNR and SSIM between two PGMs")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("validate", help="Monte Carlo validation of the patch-difference model")
    p.add_argument("--patch-sides", type=_int_list, default=[3, 5, 7, 9])
    p.add_argument("--search-sides", type=_int_list, default=[7, 11, 15, 21, 29])
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=validation.DEFAULT_BINS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-histograms", dest="histograms", action="store_false")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("benchmark", help="PSNR/SSIM sweep over images, noise levels and methods")
    p.add_argument("--spec", help="JSON benchmark spec; flags override its fields")
    p.add_argument("--images", nargs="+", help="PGM paths or synthetic specs like checker:128x128:16:64:192")
    p.add_argument("--sigmas", type=_float_list)
    p.add_argument("--methods", nargs="+")
    p.add_argument("--realizations", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--patch", type=_odd_side)
    p.add_argument("--search", type=_odd_side)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def _report(args_json, kind, message, code):
    if args_json:
        print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    else:
        print(f"pnlm: {kind}: {message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "denoise" and args.reject != "off" and not 0.0 < args.alpha <= 1.0:
        parser.error("--alpha must lie in (0, 1]")
    try:
        return args.func(args)
    except UsageError as exc:
        return _report(args.json_errors, "usage", str(exc), EXIT_USAGE)
    except (OSError, PGMError, ValueError, ArithmeticError, RuntimeError) as exc:
        return _report(args.json_errors, type(exc).__name__, str(exc), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
