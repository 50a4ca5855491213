"""Run the service, or export a title file to vectors without serving."""

import argparse
import sys

from .app import create_app
from .encoder import DEFAULT_MODEL_ID, HashEncoder, SentenceEncoder
from .export import ExportError, export_vectors


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-service")
    parser.add_argument("--port", type=int, default=8041)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--model", default=DEFAULT_MODEL_ID)
    parser.add_argument("--stub", action="store_true",
                        help="serve the deterministic hash encoder instead "
                             "of the sentence-transformer model")
    parser.add_argument("--export", nargs=2, metavar=("TITLES", "OUT"),
                        help="encode one title per line of TITLES into OUT "
                             "and exit instead of serving")
    args = parser.parse_args(argv)

    encoder = HashEncoder() if args.stub else SentenceEncoder(args.model)
    if args.export:
        try:
            count = export_vectors(args.export[0], args.export[1], encoder)
        except (ExportError, OSError) as exc:
            print(exc, file=sys.stderr)
            return 2
        print(f"wrote {count} vectors to {args.export[1]}")
        return 0

    import uvicorn
    uvicorn.run(create_app(encoder), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
