"""Reference child programs for the external-forecaster protocol.

Run as ``python -m gridcast.stubs <behaviour>``. ``naive`` is the usable
last-value forecaster; the rest exercise protocol error paths in tests.
"""

from __future__ import annotations

import hashlib
import sys
import time

import numpy as np

from .external import format_response, parse_request


def _respond(values) -> None:
    sys.stdout.write(format_response(values))
    sys.stdout.flush()


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    mode = argv[0] if argv else "naive"
    ctx, horizon = parse_request(sys.stdin.read())
    if mode == "naive":
        _respond(np.full(horizon, ctx[-1]))
    elif mode == "echo":  # returns the first H context values unchanged
        _respond(ctx[:horizon])
    elif mode == "hash":  # output depends only on this request's bytes
        seed = int.from_bytes(hashlib.sha256(ctx.tobytes()).digest()[:8], "little")
        _respond(np.random.default_rng(seed).normal(size=horizon))
    elif mode == "short":
        _respond(np.full(horizon - 1, ctx[-1]))
    elif mode == "malformed":
        sys.stdout.write("\n".join(["1.0", "not-a-number"] + ["0"] * (horizon - 2) + ["END"]) + "\n")
    elif mode == "nonfinite":
        _respond(np.full(horizon, np.nan))
    elif mode == "sleep":
        time.sleep(float(argv[1]) if len(argv) > 1 else 30.0)
        _respond(np.full(horizon, ctx[-1]))
    elif mode == "fail":
        sys.stderr.write("stub failure requested\n")
        return 3
    else:
        sys.stderr.write(f"unknown stub mode {mode!r}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
