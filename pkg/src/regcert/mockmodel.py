"""Stand-alone JSON-lines regression server.

Speaks the subprocess wire protocol from the models module, so it doubles as
the reference child implementation and as a desk-scale stand-in for external
regressors that are too heavy to run locally.  Run it with::

    python -m regcert.mockmodel --kind bounded3

Kinds:
  bounded3  smooth 2-in / 3-out map, outputs clipped into [0, 35]
  sine      the built-in synthetic sine function, for cross-checking
  identity  echoes the input (d = t, set with --dim)
"""

from __future__ import annotations

import argparse
import json
import math
import sys


def _bounded3(x):
    y1 = 15.0 + 6.0 * math.sin(x[0]) + x[1]
    y2 = 18.0 + 2.0 * math.cos(x[0] + x[1])
    y3 = 12.0 + 0.5 * x[0] * x[0] + x[1]
    return [min(max(v, 0.0), 35.0) for v in (y1, y2, y3)]


def _sine(x):
    return [10.0 * math.sin(2.0 * x[0]) + (x[1] - 2.0) ** 2 + 15.0]


def make_model(kind: str, dim: int):
    if kind == "bounded3":
        return 2, 3, _bounded3
    if kind == "sine":
        return 2, 1, _sine
    if kind == "identity":
        return dim, dim, lambda x: list(x)
    raise SystemExit(f"unknown mock kind: {kind}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kind", default="bounded3",
                        choices=["bounded3", "sine", "identity"])
    parser.add_argument("--dim", type=int, default=2,
                        help="input dimension for the identity kind")
    args = parser.parse_args(argv)

    d, t, fn = make_model(args.kind, args.dim)
    sys.stdout.write(json.dumps({"input_dim": d, "output_dim": t},
                                separators=(",", ":")) + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        y = fn(req["x"])
        sys.stdout.write(json.dumps({"id": req["id"], "y": y},
                                    separators=(",", ":")) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
