"""``sidbench-adapter``: serve a wrapped model over the detector protocol."""

from __future__ import annotations

import argparse
import sys

from .models import MODELS, AdapterStartupError, build_adapter
from .serve import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sidbench-adapter",
        description="Serve a detector model over the sidbench wire protocol (stdin/stdout).",
    )
    parser.add_argument("--model", required=True, choices=sorted(MODELS))
    parser.add_argument("--weights", default=None, help="model weights path (never downloaded)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--value", type=float, default=0.5, help="constant for the echo model")
    args = parser.parse_args(argv)

    try:
        descriptor, score_fn = build_adapter(
            args.model, args.weights, device=args.device, value=args.value
        )
    except AdapterStartupError as exc:
        print(f"sidbench-adapter: {exc}", file=sys.stderr)
        return 2
    return serve(descriptor, score_fn)


if __name__ == "__main__":
    sys.exit(main())
