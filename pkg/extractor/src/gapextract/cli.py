import argparse
import logging
import sys

from gapextract import __version__
from gapextract.errors import ExtractError
from gapextract.job import ExtractionJob
from gapextract.run import run_extraction


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract.py",
        description="Extract frozen dual-encoder embeddings into a GAPEMB v1 file.",
    )
    parser.add_argument("--backbone", required=True,
                        help="encoder id (stub, clip-vit-b32, siglip-vit-b16, "
                             "biomedclip, medsiglip)")
    parser.add_argument("--dataset", required=True,
                        help="dataset adapter name (jsonl)")
    parser.add_argument("--data-root", required=True,
                        help="folder containing the dataset metadata")
    parser.add_argument("--out", required=True, help="output .gapemb path")
    parser.add_argument("--split-seed", type=int, default=0,
                        help="seed for the 70/10/20 split when samples do not "
                             "declare splits")
    parser.add_argument("--template", default="kv",
                        help="metadata-to-text template name")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--stub-dim", type=int, default=8,
                        help="embedding dimension for the stub backbone")
    parser.add_argument("--version", action="version",
                        version=f"gapextract {__version__}")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    options = {"dim": args.stub_dim} if args.backbone == "stub" else {}
    try:
        job = ExtractionJob(
            backbone=args.backbone,
            dataset=args.dataset,
            data_root=args.data_root,
            out_path=args.out,
            split_seed=args.split_seed,
            batch_size=args.batch_size,
            device=args.device,
            template=args.template,
            backbone_options=options,
        )
        manifest = run_extraction(job)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest.n_samples} samples (d={manifest.dim}, "
          f"{manifest.extra['skip_count']} skipped) to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
