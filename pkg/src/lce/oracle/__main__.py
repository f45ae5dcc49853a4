"""Serve the synthetic backend over stdio or TCP.

Used as the launch command of ``cmd:`` endpoint specs, e.g.

    cmd:python -m lce.oracle --transport stdio
"""

import argparse
import json
import sys

from .server import serve_stdio, serve_tcp
from .synthetic import BackendParams, SyntheticBackend


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m lce.oracle")
    parser.add_argument("--transport", choices=("stdio", "tcp"), default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument(
        "--params", default=None, help="backend parameters as inline JSON"
    )
    args = parser.parse_args(argv)

    params = BackendParams.from_dict(json.loads(args.params)) if args.params else BackendParams()
    backend = SyntheticBackend(params)
    if args.transport == "stdio":
        serve_stdio(backend)
    else:
        serve_tcp(
            backend,
            args.host,
            args.port,
            ready_callback=lambda port: print(f"listening on {args.host}:{port}", flush=True),
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
