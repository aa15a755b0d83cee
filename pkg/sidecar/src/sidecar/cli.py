"""Command line entry points: `sidecar convert` and `sidecar serve`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from sidecar.backend import ModelUnavailable, ParseFailure, get_backend
from sidecar.convert import FORMALISM_ALIASES, batch_convert


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(prog="sidecar")
    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser("convert", help="batch-parse a question file")
    p_convert.add_argument("--in", dest="in_path", required=True)
    p_convert.add_argument("--out", required=True)
    p_convert.add_argument("--formalism", required=True,
                           choices=sorted(FORMALISM_ALIASES))
    p_convert.add_argument("--backend", default="heuristic-en")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8400)
    p_serve.add_argument("--workers", type=int, default=1)
    p_serve.add_argument("--backend", default="heuristic-en")

    args = parser.parse_args(argv)

    if args.command == "convert":
        in_path = Path(args.in_path)
        if not in_path.exists():
            print(f"error: input file not found: {in_path}", file=sys.stderr)
            return 2
        try:
            backend = get_backend(args.backend)
            count = batch_convert(in_path, Path(args.out), args.formalism, backend)
        except ModelUnavailable as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        except ParseFailure as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {count} parse files to {args.out}")
        return 0

    if args.command == "serve":
        import uvicorn

        from sidecar.app import create_app

        try:
            app = create_app(get_backend(args.backend))
        except ModelUnavailable as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        uvicorn.run(app, host=args.host, port=args.port, workers=args.workers)
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
