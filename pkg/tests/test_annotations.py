import pytest
from hypothesis import given
from hypothesis import strategies as st

from strandspace.annotations import (
    GUARANTEE,
    RELY,
    VALID,
    UNKNOWN,
    And,
    Forall,
    FormulaError,
    HornRule,
    Implies,
    Or,
    Pred,
    Says,
    discharge,
    forward_chain,
    formula_to_sexpr,
    parse_formula,
    parse_rule,
    predicate_names,
    shape_annotations,
    shape_obligations,
    subst_formula,
)
from strandspace.corpus import load_fixture
from strandspace.sexpr import read_one
from strandspace.skeleton import order_closure
from strandspace.terms import parse_decls, substitute

FX = load_fixture("caves")
SCOPE = parse_decls(read_one("((a e s v name) (r m p j jo d text) (nv data) (i akey))").items)


def F(text):
    return parse_formula(read_one(text), SCOPE)


def golden(key):
    return FX.golden[key].shapes[0].skeleton


# --- syntax -----------------------------------------------------------------


def test_says_parses_to_a_modal_formula():
    f = F("(says s (resource r d))")
    assert f == Says(SCOPE["s"], Pred("resource", (SCOPE["r"], SCOPE["d"])))


def test_empty_and_or_are_truth_and_falsehood():
    assert F("(and)") == And(())
    assert F("(or)") == Or(())


def test_implies_is_nary():
    f = F("(implies (says e (id a i)) (says s (verifier v)) (says e (id a i)))")
    assert isinstance(f, Implies) and len(f.antecedents) == 2


def test_quantifiers_bind_their_variables():
    f = F("(forall ((z name)) (says z (verifier v)))")
    assert isinstance(f, Forall)
    with pytest.raises(FormulaError):
        F("(says z (verifier v))")


def test_malformed_says_is_rejected():
    with pytest.raises(FormulaError, match="says"):
        F("(says s)")


def test_uninterpreted_function_symbols_are_admitted():
    f = F("(ok (hash r) a)")
    assert predicate_names(f) == {"ok"}


@pytest.mark.parametrize("text", ["(says s (resource r d))", "(implies (p a) (q a))", "(not (and (p a) (or)))"])
def test_formulas_print_back(text):
    assert formula_to_sexpr(F(text)) == read_one(text)


# --- annotations and obligations ---------------------------------------------


def test_full_verifier_annotations():
    anns = shape_annotations(golden("full-verifier"))
    assert len(anns) == 7
    attester = [x for x in anns if x.node == (3, 1)][0]
    assert attester.principal == SCOPE["a"]
    assert attester.formula == F("(and (verifier v) (meas i nv j jo m p))")
    assert attester.polarity == GUARANTEE


def test_attester_only_shape_has_one_annotation():
    anns = shape_annotations(golden("attester-compromised"))
    assert [(x.node, repr(x.principal)) for x in anns] == [((0, 1), "a")]


def test_obligation_nodes_match_reference():
    assert [o.node for o in shape_obligations(golden("full-verifier"))] == [(0, 1), (0, 3)]
    assert [o.node for o in shape_obligations(golden("full-server"))] == [(0, 6), (2, 1), (2, 3)]


@pytest.mark.parametrize("key", sorted(k for k, g in FX.golden.items() if g.count))
def test_obligations_match_the_reference_blocks_exactly(key):
    gs = FX.golden[key].shapes[0]
    mine = shape_obligations(gs.skeleton)
    assert [(o.node, o.principal, o.formula) for o in mine] == [(e.node, e.principal, e.formula) for e in gs.obligations]
    assert all(discharge(o) == VALID for o in mine)


@pytest.mark.parametrize("key", sorted(k for k, g in FX.golden.items() if g.count))
def test_antecedents_are_exactly_the_preceding_guarantees(key):
    skel = golden(key)
    before = order_closure(skel)
    anns = shape_annotations(skel)
    for ob in shape_obligations(skel):
        expected = [g for g in anns if g.polarity == GUARANTEE and g.node in before[ob.node]]
        assert len(ob.formula.antecedents) == len(expected)
        for g, ant in zip(expected, ob.formula.antecedents):
            assert ant in (g.formula, Says(g.principal, g.formula))


def test_discharge_schemata():
    member = F("(implies (says e (id a i)) (says s (verifier v)) (says e (id a i)))")
    assert discharge(member) == VALID
    projected = F(
        "(implies (ask r a j m) (says a (and (verifier v) (meas i nv j jo m p))) (says a (meas i nv j jo m p)))"
    )
    assert discharge(projected) == VALID
    assert discharge(Implies((), F("(p a)"))) == UNKNOWN
    assert discharge(F("(implies (says e (id a i)) (says s (id a i)))")) == UNKNOWN
    assert discharge(F("(implies (forall ((z name)) (p z)) (p a))")) == UNKNOWN


_PREDS = st.sampled_from(["p", "q", "r"])
_ARGS = st.lists(st.sampled_from([SCOPE["a"], SCOPE["s"], SCOPE["r"]]), max_size=2).map(tuple)
_atoms = st.builds(Pred, _PREDS, _ARGS)
_formulas = st.recursive(
    _atoms,
    lambda kid: st.one_of(
        st.builds(Says, st.sampled_from([SCOPE["a"], SCOPE["s"]]), kid),
        st.lists(kid, max_size=3).map(lambda xs: And(tuple(xs))),
    ),
    max_leaves=6,
)


@given(st.lists(_formulas, max_size=4), _formulas)
def test_discharge_never_validates_unrelated_predicates(ants, goal):
    if predicate_names(goal) & set().union(*[predicate_names(a) for a in ants]):
        return
    if not predicate_names(goal):
        return  # built only from (and): trivially true or a verbatim antecedent
    assert discharge(Implies(tuple(ants), goal)) == UNKNOWN


@given(st.sampled_from(sorted(k for k, g in FX.golden.items() if g.count)), st.data())
def test_instantiation_commutes_with_substitution(key, data):
    skel = golden(key)
    names = [v for v in skel.variables if v.sort == "name"]
    target = data.draw(st.sampled_from(names))
    sigma = {v: target for v in data.draw(st.sets(st.sampled_from(names), max_size=2))}
    sigma = {v: t for v, t in sigma.items() if v != t}
    before = [(x.node, substitute(sigma, x.principal), subst_formula(sigma, x.formula)) for x in shape_annotations(skel)]
    after = [(x.node, x.principal, x.formula) for x in shape_annotations(skel.subst(sigma))]
    assert before == after


# --- forward chaining ---------------------------------------------------------


RULE_SCOPE = parse_decls(read_one("((a e v name) (r text) (n data) (i akey))").items)


def test_server_rule_derives_approval():
    rule = parse_rule(read_one("(rule trust (approved r a n) (verifier v) (says v (approved r a n)))"), RULE_SCOPE)
    facts = {F("(verifier v)"), F("(says v (approved r a nv))")}
    assert F("(approved r a nv)") in forward_chain([rule], facts)


def test_trust_epca_rule():
    rule = parse_rule(read_one("(<- (id a i) (epca e) (says e (id a i)))"), RULE_SCOPE)
    assert F("(id a i)") in forward_chain([rule], {F("(epca e)"), F("(says e (id a i))")})


def test_says_is_opaque_to_matching():
    rule = parse_rule(read_one("(<- (id a i) (epca e) (says e (id a i)))"), RULE_SCOPE)
    facts = {F("(epca e)"), F("(says s (id a i))")}
    assert forward_chain([rule], facts) == facts


def test_empty_rule_set_is_identity():
    facts = {F("(verifier v)")}
    assert forward_chain([], facts) == facts


def test_rules_must_be_range_restricted():
    with pytest.raises(FormulaError, match="range"):
        HornRule(F("(approved r a nv)"), (F("(verifier v)"),))


@given(st.sets(st.sampled_from(["(verifier v)", "(says v (approved r a nv))", "(epca e)", "(says e (id a i))"])))
def test_forward_chaining_is_monotone(chosen):
    rules = [rule for rules, _ in FX.theories.values() for rule in rules]
    small = {F(t) for t in chosen}
    big = small | {F("(verifier v)")}
    assert forward_chain(rules, small) <= forward_chain(rules, big)
    assert small <= forward_chain(rules, small)


def test_trust_argument_reaches_every_guarantee():
    """Each principal's guarantees follow from its theory plus what it relies on."""
    skel = golden("full-client")
    anns = shape_annotations(skel)
    role_of = {i: st.role_name for i, st in enumerate(skel.strands)}
    for x in anns:
        if x.polarity != GUARANTEE:
            continue
        rules, facts = FX.theories[role_of[x.node[0]]]
        relied = {r.formula for r in anns if r.polarity == RELY and r.node[0] == x.node[0] and r.node[1] < x.node[1]}
        derived = forward_chain(rules, facts | relied)
        parts = x.formula.parts if isinstance(x.formula, And) else (x.formula,)
        for part in parts:
            assert part in derived, (x.node, part)
