"""Command-line driver.

Usage::

    rely {ingest,stats,score,report} [--config FILE] [options]

Exit status: 0 on success, 1 on usage or configuration errors, 2 on data
errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_settings
from .corpus import FORMATS, ParseError
from .embedding import KINDS, VectorFormatError
from .report import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("rely")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="flat key = value config file")
    common.add_argument("--input", help="corpus file (.pubs or PubMed XML)")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--vectors", help="word2vec-style vector file")
    common.add_argument("--vector-kind", choices=KINDS)
    common.add_argument("--out-dir")
    common.add_argument("--rejects", help="sidecar file for rejected records")
    common.add_argument("--workers", type=int)
    common.add_argument("--strict", action="store_true", default=None, help="abort on the first bad record")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="rely", description="Journal self-citation relevance (ReLy) scoring.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="validate and normalize a corpus")
    sub.add_parser("stats", parents=[common], help="journal self-citation statistics")
    sub.add_parser("score", parents=[common], help="publication and journal ReLy scores")
    sub.add_parser("report", parents=[common], help="histograms, extremes and correlation")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    flags = {
        "input": args.input,
        "format": args.format,
        "vectors": args.vectors,
        "vector_kind": args.vector_kind,
        "out_dir": args.out_dir,
        "rejects": args.rejects,
        "workers": args.workers,
        "strict": args.strict,
    }
    try:
        settings = load_settings(args.config, flags=flags)
    except ConfigError as e:
        print(f"rely: config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "ingest":
            rep = pipeline.ingest(settings)
            log.info("%d records, %d accepted, %d rejected", rep.records, rep.accepted, rep.rejected)
        elif args.command == "stats":
            rows = pipeline.stats(settings)
            log.info("%d eligible journals", len(rows))
        elif args.command == "score":
            run = pipeline.score(settings)
            log.info("scored %s publications", run.manifest.counts["scored"])
        else:
            pipeline.report(settings)
    except ConfigError as e:
        print(f"rely: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.DataError, ParseError, VectorFormatError, OSError, UnicodeDecodeError) as e:
        print(f"rely: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
