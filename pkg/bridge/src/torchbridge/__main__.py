"""Entry points: `python -m torchbridge` serves; `... trace SCRIPT OUT` records."""

import argparse
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="torchbridge")
    sub = parser.add_subparsers(dest="cmd")
    tr = sub.add_parser("trace", help="run a model script with ops hooked")
    tr.add_argument("script")
    tr.add_argument("out")
    args = parser.parse_args(argv)

    if args.cmd == "trace":
        from .tracer import emit_trace
        count, skipped = emit_trace(args.script, args.out)
        print(f"torchbridge: {count} records, {skipped} skipped -> {args.out}",
              file=sys.stderr)
        return 0

    from .server import serve
    serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
