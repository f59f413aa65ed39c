"""Analyze every shipped fixture, time each scenario, and diff against the goldens.

    python scripts/run_caves.py [--out DIR]
"""

import argparse
import time
from pathlib import Path

from strandspace.cli import analyze, diff_streams, load_stream, render, solver_config, split_stream
from strandspace.corpus import FIXTURES, load_fixture
from strandspace.sexpr import read_all


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="directory for the output streams")
    args = ap.parse_args()
    for name in FIXTURES:
        fx = load_fixture(name)
        cfg = solver_config(fx.source, argparse.Namespace())
        print(f"== {name}")
        for sc in fx.scenarios:
            start = time.perf_counter()
            an = analyze(fx.source, cfg, sc.key)
            tree = an.runs[0].tree
            secs = time.perf_counter() - start
            flag = " (incomplete)" if tree.incomplete else ""
            print(f"  {sc.key:28} {len(tree.nodes):4} skeletons {len(tree.shapes())} shape(s) {secs:6.2f}s{flag}")
        text = render(analyze(fx.source, cfg))
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{name}.out").write_text(text)
        golden, protocols = load_stream(fx.path / "golden")
        forms = read_all(text)
        from strandspace.cli import _collect_protocols

        _collect_protocols(forms, protocols)
        rep = diff_streams(split_stream(forms), golden, protocols)
        for line in rep.lines:
            print("  " + line)


if __name__ == "__main__":
    main()
