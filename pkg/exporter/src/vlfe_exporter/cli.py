"""Exporter command line: `export` writes a VLFE pool, `rewrite` serves the
one-line prompt-rewriting protocol."""
from __future__ import annotations

import argparse
import json
import sys

from .backends import BackendError, embed_images
from .manifest import ExportManifest, ManifestError
from .poolfile import write_pool_file
from .rewrite import run as rewrite_run


def cmd_export(args: argparse.Namespace) -> int:
    manifest = ExportManifest.load(args.manifest)
    model = args.model or manifest.model
    output = args.out or manifest.output
    embeddings = embed_images([e.image for e in manifest.entries], model)
    write_pool_file(output,
                    ids=[e.id for e in manifest.entries],
                    descriptors=[e.descriptor for e in manifest.entries],
                    embeddings=embeddings)
    print(json.dumps({"out": output, "count": len(manifest.entries),
                      "dim": int(embeddings.shape[1]), "model": model}, sort_keys=True))
    return 0


def cmd_rewrite(args: argparse.Namespace) -> int:
    return rewrite_run(llm_cmd=args.llm_cmd.split() if args.llm_cmd else None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlfe-exporter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed manifest images and write a pool file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default=None, help="pixelstats (default) or clip:<checkpoint>")
    p.add_argument("--out", default=None, help="override the manifest output path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("rewrite", help="one JSON request line in, one prompt line out")
    p.add_argument("--llm-cmd", default=None,
                   help="external LLM command; its reply must match the template")
    p.set_defaults(func=cmd_rewrite)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, BackendError, ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
