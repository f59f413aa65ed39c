"""Replay the trust argument behind each guarantee of the full-client shape.

For every transmission annotation, forward-chain the principal's theory
together with what that principal relied on earlier on its strand, then
report which conjuncts of the guarantee were derived.
"""

from strandspace.annotations import GUARANTEE, RELY, And, forward_chain, formula_to_sexpr, shape_annotations
from strandspace.corpus import load_fixture
from strandspace.sexpr import flat


def main(scenario: str = "full-client") -> None:
    fx = load_fixture("caves")
    skel = fx.golden[scenario].shapes[0].skeleton
    anns = shape_annotations(skel)
    for g in anns:
        if g.polarity != GUARANTEE:
            continue
        role = skel.strands[g.node[0]].role_name
        rules, facts = fx.theories.get(role, ([], set()))
        relied = {r.formula for r in anns if r.polarity == RELY and r.node[0] == g.node[0] and r.node[1] < g.node[1]}
        known = forward_chain(rules, facts | relied)
        parts = g.formula.parts if isinstance(g.formula, And) else (g.formula,)
        print(f"{role} at {g.node} guarantees {flat(formula_to_sexpr(g.formula))}")
        for p in parts:
            print(f"  {'derived' if p in known else 'MISSING'}  {flat(formula_to_sexpr(p))}")


if __name__ == "__main__":
    main()
