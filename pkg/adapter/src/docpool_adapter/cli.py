"""Adapter CLI: turn manifests and token-range excerpts into SEMB files.

Exit codes follow the composition toolkit's contract: 0 success,
1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .backends import SPECS, BackendUnavailable, get_backend
from .encode import EncodeError, encode_manifest, encode_ranges
from .semb import SembError

BACKEND_CHOICES = ("laser", "labse", "sbert", "hashed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise EncodeError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    encode = sub.add_parser("encode", help="one SEMB per document, one row per sentence")
    encode.add_argument("--backend", required=True, choices=BACKEND_CHOICES)
    encode.add_argument("--manifest", required=True)
    encode.add_argument("--out", required=True, help="output directory")
    encode.add_argument("--model-path", help="override the default model id/path")
    encode.add_argument("--hash-dim", type=int, default=32, help="dim of the hashed test backend")
    encode.add_argument(
        "--no-manifest-update",
        action="store_true",
        help="do not write measured subword counts back into the manifest",
    )

    ranges = sub.add_parser("encode-ranges", help="one vector per document from token ranges")
    ranges.add_argument("--backend", required=True, choices=BACKEND_CHOICES)
    ranges.add_argument("--manifest", required=True)
    ranges.add_argument("--ranges", required=True, help="token-range JSONL file")
    ranges.add_argument("--out", required=True, help="output container (.semb)")
    ranges.add_argument("--model-path", help="override the default model id/path")
    ranges.add_argument("--hash-dim", type=int, default=32)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "encode":
        backend = get_backend(args.backend, args.model_path, dim=args.hash_dim)
        warnings = encode_manifest(
            args.manifest, backend, args.out, update_manifest=not args.no_manifest_update
        )
        if warnings:
            print(f"{len(warnings)} sentence(s) truncated; see warnings.jsonl", file=sys.stderr)
        print(f"encoded manifest {args.manifest} with {args.backend} -> {args.out}")
        return 0
    n = encode_ranges(
        args.ranges,
        args.manifest,
        args.backend,
        args.out,
        backend_factory=lambda name: get_backend(name, args.model_path, dim=args.hash_dim),
    )
    print(f"encoded {n} excerpt vector(s) with {args.backend} -> {args.out}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (EncodeError, BackendUnavailable, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SembError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
