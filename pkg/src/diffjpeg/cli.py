"""Command-line experiment harness.

Exit codes: 0 success, 1 usage error, 2 assertion failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

import numpy as np

from . import __version__
from .core import LEVELS, SURROGATES, PipelineConfig
from .experiments import (
    BASELINES,
    VARIANT_NAMES,
    VariantSpec,
    code,
    invert_quality,
    load_images,
    per_quality_means,
    range_means,
    run_sweep,
)
from .gradcheck import FAMILIES, check_config
from .io import PPMError, SweepRecord, format_float, read_ppm, write_csv, write_ppm, write_table
from .metrics import psnr, ssim
from .reference import reference_encode_decode

EXIT_OK, EXIT_USAGE, EXIT_ASSERT, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_qualities(text: str) -> list:
    """Parse ``"1-10,50,90"`` into a sorted list of integer qualities."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                out.update(range(lo, hi + 1))
            else:
                out.add(int(part))
        except ValueError:
            raise UsageError(f"bad quality list {text!r}") from None
    if not out or min(out) < 1 or max(out) > 99:
        raise UsageError(f"qualities must be integers in [1, 99], got {text!r}")
    return sorted(out)


def parse_variants(text: str, allow_reference: bool = True) -> list:
    names = [v.strip() for v in text.split(",") if v.strip()]
    allowed = VARIANT_NAMES if allow_reference else VARIANT_NAMES[1:]
    for n in names:
        if n not in allowed:
            raise UsageError(f"unknown variant {n!r}; choose from {', '.join(allowed)}")
    if not names:
        raise UsageError("no variants given")
    return names


def _meta(args, command: str) -> str | None:
    if args.no_meta:
        return None
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"diffjpeg {__version__} {command} generated {stamp}"


def _specs(names, surrogate=None, gamma=None) -> list:
    specs = []
    for n in names:
        # reference-only options are ignored for the reference itself
        if n == "reference":
            specs.append(VariantSpec(n, n))
        else:
            specs.append(VariantSpec(n, n, surrogate, gamma))
    return specs


def _sidecar(path: str, suffix: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.{suffix}{ext or '.csv'}"


def _write_outputs(args, rows, command: str):
    """Main CSV (per variant and quality), per-image CSV and range summary CSV."""
    meta = _meta(args, command)
    means = per_quality_means(rows)
    write_csv(args.out, [
        SweepRecord(r.quality, r.variant, r.psnr_db, r.ssim, r.grad_q_norm, r.grad_qt_norm)
        for r in means
    ], meta)
    per_image = [["image", "quality", "variant", "psnr_db", "ssim", "grad_q_norm", "grad_qt_norm"]]
    for r in rows:
        per_image.append([r.image, str(r.quality), r.variant, format_float(r.psnr_db),
                          format_float(r.ssim), format_float(r.grad_q_norm),
                          format_float(r.grad_qt_norm)])
    write_table(_sidecar(args.out, "images"), per_image, meta)
    summary = range_means(rows)
    table = [["variant", "q_range", "psnr_db", "ssim", "grad_q_norm", "grad_qt_norm", "n"]]
    for s in summary:
        table.append([s.variant, s.q_range, format_float(s.psnr_db), format_float(s.ssim),
                      format_float(s.grad_q_norm), format_float(s.grad_qt_norm), str(s.count)])
    write_table(_sidecar(args.out, "summary"), table, meta)
    return summary


def _print_summary(summary, columns):
    print(f"{'variant':12s} {'q range':8s} " + " ".join(f"{c:>12s}" for c in columns))
    for s in summary:
        vals = " ".join(f"{format_float(getattr(s, c)):>12s}" for c in columns)
        print(f"{s.variant:12s} {s.q_range:8s} {vals}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_code(args) -> int:
    img = read_ppm(args.input)
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    spec = _specs([args.variant], args.surrogate, args.gamma)[0]
    if args.variant == "reference" and not float(args.quality).is_integer():
        raise UsageError("the reference codec needs an integer quality")
    out = code(img, spec, args.quality)
    write_ppm(args.output, out)
    if args.compare:
        ref = reference_encode_decode(img, int(round(args.quality)))
        print(f"variant={args.variant} quality={args.quality:g} "
              f"psnr_db={format_float(psnr(out, ref))} ssim={format_float(ssim(out, ref))}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    names = parse_variants(args.variants)
    images = load_images(args.imgdir)
    specs = _specs(names, args.surrogate, args.gamma)
    rows = run_sweep(images, specs, parse_qualities(args.qualities), jobs=args.jobs)
    _print_summary(_write_outputs(args, rows, "sweep"), ("psnr_db", "ssim"))
    return EXIT_OK


def cmd_ablate(args) -> int:
    images = load_images(args.imgdir)
    specs = [VariantSpec(lv, lv, "polynomial") for lv in LEVELS]
    for g in args.gammas:
        specs.append(VariantSpec(f"E-gamma{format_float(g)}", "E", "polynomial", g))
    rows = run_sweep(images, specs, parse_qualities(args.qualities), jobs=args.jobs)
    summary = _write_outputs(args, rows, "ablate")
    _print_summary(summary, ("psnr_db", "ssim"))
    lo = {s.variant: s.psnr_db for s in summary if s.q_range == "1-10"}
    if all(lv in lo for lv in LEVELS):
        a, b, c, d, e, f = (lo[lv] for lv in LEVELS)
        ok = a < b < c <= d < e <= f
        print(f"ordering A<B<C<=D<E<=F on mean PSNR (q 1-10): {'pass' if ok else 'fail'}")
        if args.assert_order and not ok:
            return EXIT_ASSERT
    return EXIT_OK


def cmd_vanishgrad(args) -> int:
    names = parse_variants(args.variants, allow_reference=False)
    images = load_images(args.imgdir)
    rows = run_sweep(images, _specs(names), parse_qualities(args.qualities),
                     mode="vanish", jobs=args.jobs)
    _print_summary(_write_outputs(args, rows, "vanishgrad"), ("grad_q_norm", "grad_qt_norm"))
    return EXIT_OK


def cmd_invert(args) -> int:
    img = read_ppm(args.image)
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    if args.target is not None:
        target = read_ppm(args.target)
        if target.shape != img.shape:
            raise UsageError(f"target shape {target.shape} differs from image {img.shape}")
    else:
        target = reference_encode_decode(img, args.true_quality)
    names = parse_variants(args.variant, allow_reference=False)
    if len(names) != 1:
        raise UsageError("invert takes exactly one variant")
    spec = VariantSpec(names[0], names[0], args.surrogate, args.gamma, args.ste_backward)
    spec.config(args.init)  # validate the options before the long run
    res = invert_quality(img, target, spec, args.true_quality, args.init, args.steps,
                         args.lr, args.tolerance)
    if args.trajectory:
        rows = [["step", "quality", "loss", "grad_q"]]
        rows += [[str(s), format_float(q), format_float(l), format_float(g)]
                 for s, q, l, g in res.trajectory]
        write_table(args.trajectory, rows, _meta(args, "invert"))
    conv = "never" if res.converged_step is None else str(res.converged_step)
    print(f"q_hat={res.q_hat:.4f} true={args.true_quality:g} error={res.error:.4f} "
          f"converged_step={conv}{' diverged' if res.diverged else ''}")
    if args.assert_ and (res.diverged or res.error > args.tolerance):
        print(f"assertion failed: |q_hat - q*| = {res.error:.4f} > {args.tolerance:g}",
              file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = PipelineConfig(level=args.level, rounding_surrogate=args.surrogate,
                         ste_backward=args.ste_backward)
    report = check_config(cfg, min_coords=args.min_coords, size=args.size, seed=args.seed,
                          loss=args.loss, tolerance=args.tolerance)
    print(report.summary())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(report.to_csv())
    short = [f for f in FAMILIES if report.count(f) < args.min_coords]
    if args.assert_ and (not report.passed or short):
        return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, jobs=True):
    p.add_argument("--seed", type=int, default=0, help="seed for sampled subsets")
    p.add_argument("--no-meta", action="store_true", help="omit the timestamp comment line")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes")


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diffjpeg", description="Differentiable JPEG experiments.")
    p.add_argument("--version", action="version", version=f"diffjpeg {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    variants = ", ".join(VARIANT_NAMES)

    c = sub.add_parser("code", help="JPEG-code one image")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--quality", type=float, required=True)
    c.add_argument("--variant", default="reference", choices=VARIANT_NAMES, metavar="NAME",
                   help=f"one of {variants}")
    c.add_argument("--surrogate", choices=SURROGATES)
    c.add_argument("--gamma", type=_positive(float))
    c.add_argument("--compare", action="store_true", help="print PSNR/SSIM vs the reference")
    _common(c, jobs=False)
    c.set_defaults(func=cmd_code)

    s = sub.add_parser("sweep", help="forward fidelity vs the reference over qualities")
    s.add_argument("imgdir")
    s.add_argument("out")
    s.add_argument("--variants", default=",".join(BASELINES))
    s.add_argument("--qualities", default="1-99")
    s.add_argument("--surrogate", choices=SURROGATES)
    s.add_argument("--gamma", type=_positive(float))
    _common(s)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", help="configs A-F with the polynomial surrogate")
    a.add_argument("imgdir")
    a.add_argument("out")
    a.add_argument("--qualities", default="1-99")
    a.add_argument("--gammas", type=lambda t: [float(x) for x in t.split(",") if x],
                   default=[0.1], help="extra clip gammas to run at level E")
    a.add_argument("--assert", dest="assert_order", action="store_true",
                   help="exit 2 if the A-F ordering does not hold")
    _common(a)
    a.set_defaults(func=cmd_ablate)

    v = sub.add_parser("vanishgrad", help="gradient norms of L1 to the reference")
    v.add_argument("imgdir")
    v.add_argument("out")
    v.add_argument("--variants", default=",".join(BASELINES))
    v.add_argument("--qualities", default="1-99")
    _common(v)
    v.set_defaults(func=cmd_vanishgrad)

    i = sub.add_parser("invert", help="recover a hidden quality by gradient descent")
    i.add_argument("image", help="uncoded source image")
    i.add_argument("--target", help="coded target (default: reference-code IMAGE at --true-quality)")
    i.add_argument("--true-quality", type=int, required=True)
    i.add_argument("--init", type=float, default=70.0)
    i.add_argument("--steps", type=int, default=200)
    i.add_argument("--lr", type=_positive(float), default=1.0)
    i.add_argument("--variant", default="ours")
    i.add_argument("--surrogate", choices=SURROGATES)
    i.add_argument("--gamma", type=_positive(float))
    i.add_argument("--ste-backward", choices=("surrogate", "constant"))
    i.add_argument("--tolerance", type=float, default=2.0)
    i.add_argument("--trajectory", help="write the (step, q, loss, grad) trajectory CSV")
    i.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 2 unless |q_hat - q*| <= tolerance")
    _common(i, jobs=False)
    i.set_defaults(func=cmd_invert)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--level", default="E", choices=LEVELS)
    g.add_argument("--surrogate", default="polynomial", choices=SURROGATES)
    g.add_argument("--ste-backward", default="surrogate", choices=("surrogate", "constant"))
    g.add_argument("--loss", default="weighted", choices=("sum", "weighted", "l1_vs_reference"))
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--min-coords", type=int, default=50)
    g.add_argument("--size", type=int, default=16)
    g.add_argument("--csv")
    g.add_argument("--assert", dest="assert_", action="store_true")
    _common(g, jobs=False)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            parser.error("--jobs must be at least 1")
    except SystemExit as exc:
        # argparse exits for --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"diffjpeg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PPMError) as exc:
        print(f"diffjpeg: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"diffjpeg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
