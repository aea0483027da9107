"""Command line: export embeddings (and optionally the vocabulary).

    cemb-export export --model ID --smiles-file PATH --out PATH \
        [--vocab-out PATH] [--width H]

Exit codes: 0 all records written, 1 some SMILES were skipped, 2 bad
input, 3 model load failure.
"""

from __future__ import annotations

import argparse
import sys

from .export import (
    ExportManifest,
    ModelLoadError,
    TransformersBackend,
    export_embeddings,
    export_vocab,
    read_smiles_file,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cemb-export")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed SMILES and write a CEMB file")
    p.add_argument("--model", required=True, help="pretrained model identifier")
    p.add_argument("--smiles-file", required=True, help="one SMILES per line")
    p.add_argument("--out", required=True, help="CEMB output path")
    p.add_argument("--vocab-out", default=None, help="also write the model vocabulary")
    p.add_argument("--width", type=int, default=768, help="expected hidden width")
    return parser


def main(argv=None, backend=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        smiles = read_smiles_file(args.smiles_file)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not smiles:
        print("error: no SMILES in input file", file=sys.stderr)
        return 2
    manifest = ExportManifest(
        model_id=args.model,
        smiles=smiles,
        out_path=args.out,
        hidden_width=args.width,
    )
    try:
        if backend is None:
            backend = TransformersBackend(args.model)
        report = export_embeddings(manifest, backend)
        if args.vocab_out:
            count = export_vocab(backend, args.vocab_out)
            print(f"wrote {count} vocabulary tokens to {args.vocab_out}")
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {len(report.written)} records to {args.out} "
        f"(deduplicated {report.deduplicated}, skipped {len(report.skipped)})"
    )
    for smiles_text, reason in report.skipped:
        print(f"skipped {smiles_text!r}: {reason}", file=sys.stderr)
    return 1 if report.skipped else 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
