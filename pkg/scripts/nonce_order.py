"""Compare test-selection orders: nonce tests first versus encryption tests first.

    python scripts/nonce_order.py [--step-limit N]
"""

import argparse
import time
from dataclasses import replace

from strandspace.cli import analyze, solver_config
from strandspace.corpus import load_fixture


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--step-limit", type=int, default=400)
    args = ap.parse_args()
    fx = load_fixture("caves")
    base = replace(solver_config(fx.source, argparse.Namespace()), step_limit=args.step_limit)
    print(f"{'scenario':28} {'order':10} {'skeletons':>9} {'shapes':>6} {'secs':>7}")
    for sc in fx.scenarios:
        for label, nonces in (("nonces", True), ("encs", False)):
            start = time.perf_counter()
            tree = analyze(fx.source, replace(base, check_nonces_first=nonces), sc.key).runs[0].tree
            secs = time.perf_counter() - start
            note = " incomplete" if tree.incomplete else ""
            print(f"{sc.key:28} {label:10} {len(tree.nodes):9} {len(tree.shapes()):6} {secs:7.2f}{note}")


if __name__ == "__main__":
    main()
