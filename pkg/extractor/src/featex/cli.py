"""featex command line: extract features, verify produced files.

verify re-runs the retrieval pipeline's own reader and validation rules,
so a file that verifies here is guaranteed to load there.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter

from .extract import ExtractionJob, extract
from .models import MODEL_NAMES, ModelUnavailableError


def cmd_extract(args) -> int:
    angles = tuple(float(a) for a in args.angles.split(",") if a.strip()) \
        if args.angles else ()
    job = ExtractionJob(image_root=args.images, out_path=args.out,
                        model=args.model, angles=angles, batch_size=args.batch_size)
    print(f"command=extract images={args.images} out={args.out} "
          f"model={args.model} angles={args.angles or ''}")
    report = extract(job)
    print(f"wrote {args.out}: n={report.n} d={report.d} R={report.rotations} "
          f"skipped={len(report.skipped)}")
    return 0


def cmd_verify(args) -> int:
    try:
        from semhash.featureio import read_features
    except ImportError:
        print("error: the semhash package is required for verify", file=sys.stderr)
        return 1
    fs = read_features(args.path)
    histogram = Counter(fs.labels.tolist()) if fs.labels is not None else {}
    print(f"OK n={fs.n} d={fs.d} R={fs.rotations}")
    for label in sorted(histogram):
        print(f"label_{label}={histogram[label]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featex", description="CNN feature extraction into USDF files")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract features from a class-per-subfolder tree")
    p.add_argument("--images", required=True, help="root folder, one subfolder per class")
    p.add_argument("--out", required=True, help="output USDF path")
    p.add_argument("--model", default="seeded-cnn", choices=MODEL_NAMES)
    p.add_argument("--angles", default="-10,-5,5,10",
                   help="comma-separated rotation degrees; empty for none "
                        "(use --angles=-10,5 form for negative values)")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="validate a USDF file with the primary reader")
    p.add_argument("path")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelUnavailableError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # format violations from the primary reader
        if type(exc).__name__ == "FormatError":
            print(f"error: {exc}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
