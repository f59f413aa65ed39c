"""Explore the disagreement attack on the two flawed protocol versions.

Prints, for each scenario, the shapes found and, for each shape, the
server strand's s and k beside every client strand's bindings.
"""

import argparse

from strandspace.cli import analyze, solver_config
from strandspace.corpus import load_fixture
from strandspace.terms import NAME, SKEY, Var

S, K = Var("s", NAME), Var("k", SKEY)


def main() -> None:
    for name in ("caves-flawed", "caves-precursor"):
        fx = load_fixture(name)
        an = analyze(fx.source, solver_config(fx.source, argparse.Namespace()))
        for run in an.runs:
            found = sorted(run.tree.shapes(), key=lambda n: n.label)
            print(f"{name}/{run.key}: {len(found)} shape(s), {len(run.tree.nodes)} skeletons")
            for node in found:
                roles = [st.role_name for st in node.skeleton.strands]
                print(f"  label {run.label(node)}: {' '.join(roles)}")
                for i, st in enumerate(node.skeleton.strands):
                    if S in st.env or K in st.env:
                        print(f"    {i} {st.role_name:7} s={st.env.get(S)!r:6} k={st.env.get(K)!r}")


if __name__ == "__main__":
    main()
