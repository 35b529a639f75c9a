"""Command line for the denoiser server."""

from __future__ import annotations

import argparse
import sys

from .backends import GaussianParams, gaussian_backend, identity_backend, plugin_backend
from .server import ServerConfig, serve


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdcm-denoiser-server", description=__doc__)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--listen", help="host:port to serve on")
    mode.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")
    p.add_argument("--backend", choices=("identity", "gaussian", "plugin"), default="gaussian")
    p.add_argument("--prior-mean", type=float, default=0.0)
    p.add_argument("--prior-var-lo", type=float, default=0.25)
    p.add_argument("--prior-var-hi", type=float, default=4.0)
    p.add_argument("--plugin-path", default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend == "identity":
        backend = identity_backend()
    elif args.backend == "gaussian":
        backend = gaussian_backend(
            GaussianParams(args.prior_mean, args.prior_var_lo, args.prior_var_hi)
        )
    else:
        if not args.plugin_path:
            print("error: --backend plugin needs --plugin-path", file=sys.stderr)
            return 2
        try:
            backend = plugin_backend(args.plugin_path)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    serve(ServerConfig(backend=backend, listen=None if args.stdio else args.listen))
    return 0


if __name__ == "__main__":
    sys.exit(main())
