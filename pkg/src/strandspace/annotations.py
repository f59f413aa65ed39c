"""Rely-guarantee formulas, shape annotations, obligations, discharge, and Horn chaining."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .sexpr import SExpr, SList, Symbol, slist, sym
from .terms import (
    SORTS,
    Term,
    TermError,
    Var,
    parse_term,
    substitute,
    term_to_sexpr,
)


class FormulaError(Exception):
    pass


_TERM_HEADS = {"enc", "cat", "pubk", "privk", "invk", "ltk"}


@dataclass(frozen=True)
class App:
    """Uninterpreted function application inside a formula."""

    name: str
    args: tuple["FTerm", ...]


FTerm = Union[Term, App]


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple[FTerm, ...] = ()


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...] = ()


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...] = ()


@dataclass(frozen=True)
class Implies:
    antecedents: tuple["Formula", ...]
    consequent: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Says:
    principal: FTerm
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    decls: tuple[Var, ...]
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    decls: tuple[Var, ...]
    body: "Formula"


Formula = Union[Pred, Not, And, Or, Implies, Iff, Says, Forall, Exists]

TRUE = And(())
FALSE = Or(())


def is_trivial(f: Formula) -> bool:
    return f == TRUE


# ---------------------------------------------------------------------------
# Parsing and printing


def _parse_fterm(form: SExpr, env: Mapping[str, Var]) -> FTerm:
    if isinstance(form, SList) and form.head is not None and form.head not in _TERM_HEADS:
        return App(form.head, tuple(_parse_fterm(a, env) for a in form.items[1:]))
    try:
        return parse_term(form, env)
    except TermError as exc:
        raise FormulaError(str(exc)) from exc


def _parse_quant_decls(form: SExpr) -> dict[str, Var]:
    if not isinstance(form, SList):
        raise FormulaError("quantifier declarations must be a list")
    out: dict[str, Var] = {}
    for d in form:
        if not isinstance(d, SList) or len(d) < 2 or not isinstance(d.items[-1], Symbol):
            raise FormulaError("malformed quantifier declaration")
        srt = d.items[-1].text
        if srt not in SORTS:
            raise FormulaError(f"unknown sort {srt}")
        for n in d.items[:-1]:
            if not isinstance(n, Symbol):
                raise FormulaError("malformed quantifier declaration")
            out[n.text] = Var(n.text, srt)
    return out


def parse_formula(form: SExpr, scope: Mapping[str, Var]) -> Formula:
    if not isinstance(form, SList) or form.head is None:
        raise FormulaError(f"formula expected, got {form}")
    head, args = form.head, form.items[1:]
    if head == "and":
        return And(tuple(parse_formula(a, scope) for a in args))
    if head == "or":
        return Or(tuple(parse_formula(a, scope) for a in args))
    if head == "not":
        if len(args) != 1:
            raise FormulaError("not takes one formula")
        return Not(parse_formula(args[0], scope))
    if head == "implies":
        if not args:
            raise FormulaError("implies needs at least a consequent")
        parts = [parse_formula(a, scope) for a in args]
        return Implies(tuple(parts[:-1]), parts[-1])
    if head == "iff":
        if len(args) != 2:
            raise FormulaError("iff takes two formulas")
        return Iff(parse_formula(args[0], scope), parse_formula(args[1], scope))
    if head == "says":
        if len(args) != 2:
            raise FormulaError("malformed says: (says term formula) expected")
        return Says(_parse_fterm(args[0], scope), parse_formula(args[1], scope))
    if head in ("forall", "exists"):
        if len(args) != 2:
            raise FormulaError(f"malformed {head}")
        bound = _parse_quant_decls(args[0])
        inner = dict(scope)
        inner.update(bound)
        body = parse_formula(args[1], inner)
        cls = Forall if head == "forall" else Exists
        return cls(tuple(bound.values()), body)
    return Pred(head, tuple(_parse_fterm(a, scope) for a in args))


def _fterm_sexpr(t: FTerm) -> SExpr:
    if isinstance(t, App):
        return slist(sym(t.name), *[_fterm_sexpr(a) for a in t.args])
    return term_to_sexpr(t)


def formula_to_sexpr(f: Formula) -> SExpr:
    if isinstance(f, Pred):
        return slist(sym(f.name), *[_fterm_sexpr(a) for a in f.args])
    if isinstance(f, And):
        return slist(sym("and"), *[formula_to_sexpr(p) for p in f.parts])
    if isinstance(f, Or):
        return slist(sym("or"), *[formula_to_sexpr(p) for p in f.parts])
    if isinstance(f, Not):
        return slist(sym("not"), formula_to_sexpr(f.body))
    if isinstance(f, Implies):
        return slist(sym("implies"), *[formula_to_sexpr(p) for p in f.antecedents], formula_to_sexpr(f.consequent))
    if isinstance(f, Iff):
        return slist(sym("iff"), formula_to_sexpr(f.left), formula_to_sexpr(f.right))
    if isinstance(f, Says):
        return slist(sym("says"), _fterm_sexpr(f.principal), formula_to_sexpr(f.body))
    if isinstance(f, (Forall, Exists)):
        from .terms import decls_to_sexpr

        head = "forall" if isinstance(f, Forall) else "exists"
        return slist(sym(head), slist(*decls_to_sexpr(f.decls)), formula_to_sexpr(f.body))
    raise FormulaError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Substitution and variables


def _fterm_subst(s: Mapping[Var, Term], t: FTerm) -> FTerm:
    if isinstance(t, App):
        return App(t.name, tuple(_fterm_subst(s, a) for a in t.args))
    return substitute(s, t)


def subst_formula(s: Mapping[Var, Term], f: Formula) -> Formula:
    if isinstance(f, Pred):
        return Pred(f.name, tuple(_fterm_subst(s, a) for a in f.args))
    if isinstance(f, And):
        return And(tuple(subst_formula(s, p) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(subst_formula(s, p) for p in f.parts))
    if isinstance(f, Not):
        return Not(subst_formula(s, f.body))
    if isinstance(f, Implies):
        return Implies(tuple(subst_formula(s, p) for p in f.antecedents), subst_formula(s, f.consequent))
    if isinstance(f, Iff):
        return Iff(subst_formula(s, f.left), subst_formula(s, f.right))
    if isinstance(f, Says):
        return Says(_fterm_subst(s, f.principal), subst_formula(s, f.body))
    if isinstance(f, (Forall, Exists)):
        inner = {v: t for v, t in s.items() if v not in f.decls}
        return type(f)(f.decls, subst_formula(inner, f.body))
    raise FormulaError(f"not a formula: {f!r}")


def _fterm_vars(t: FTerm, out: set) -> None:
    from .terms import variables

    if isinstance(t, App):
        for a in t.args:
            _fterm_vars(a, out)
    else:
        out |= variables(t)


def free_vars(f: Formula) -> set[Var]:
    out: set[Var] = set()
    if isinstance(f, Pred):
        for a in f.args:
            _fterm_vars(a, out)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            out |= free_vars(p)
    elif isinstance(f, Not):
        out |= free_vars(f.body)
    elif isinstance(f, Implies):
        for p in f.antecedents:
            out |= free_vars(p)
        out |= free_vars(f.consequent)
    elif isinstance(f, Iff):
        out |= free_vars(f.left) | free_vars(f.right)
    elif isinstance(f, Says):
        _fterm_vars(f.principal, out)
        out |= free_vars(f.body)
    elif isinstance(f, (Forall, Exists)):
        out |= free_vars(f.body) - set(f.decls)
    return out


def has_quantifier(f: Formula) -> bool:
    if isinstance(f, (Forall, Exists)):
        return True
    if isinstance(f, (And, Or)):
        return any(has_quantifier(p) for p in f.parts)
    if isinstance(f, Not):
        return has_quantifier(f.body)
    if isinstance(f, Implies):
        return any(has_quantifier(p) for p in f.antecedents) or has_quantifier(f.consequent)
    if isinstance(f, Iff):
        return has_quantifier(f.left) or has_quantifier(f.right)
    if isinstance(f, Says):
        return has_quantifier(f.body)
    return False


def predicate_names(f: Formula) -> set[str]:
    if isinstance(f, Pred):
        return {f.name}
    if isinstance(f, (And, Or)):
        return set().union(*[predicate_names(p) for p in f.parts]) if f.parts else set()
    if isinstance(f, (Not, Says, Forall, Exists)):
        return predicate_names(f.body)
    if isinstance(f, Implies):
        out = predicate_names(f.consequent)
        for p in f.antecedents:
            out |= predicate_names(p)
        return out
    if isinstance(f, Iff):
        return predicate_names(f.left) | predicate_names(f.right)
    return set()


# ---------------------------------------------------------------------------
# Annotations and obligations over shapes

GUARANTEE, RELY = "guarantee", "rely"


@dataclass(frozen=True)
class AnnotatedNode:
    node: tuple[int, int]
    principal: Term
    formula: Formula
    polarity: str


@dataclass(frozen=True)
class Obligation:
    node: tuple[int, int]
    principal: Term
    formula: Implies


def shape_annotations(skel) -> list[AnnotatedNode]:
    """Instantiate every non-trivial role annotation on the strands of ``skel``."""
    out: list[AnnotatedNode] = []
    for si, strand in enumerate(skel.strands):
        role = strand.role
        if role is None or role.annotations is None:
            continue
        principal_pat, table = role.annotations
        env = strand.env
        principal = substitute(env, principal_pat)
        for pos in sorted(table):
            if pos >= strand.height:
                continue
            f = table[pos]
            if is_trivial(f):
                continue
            inst = subst_formula(env, f)
            loose = free_vars(inst) & set(role.variables)
            if loose - set(env):
                raise FormulaError(f"annotation at ({si} {pos}) leaves {sorted(v.name for v in loose)} free")
            polarity = GUARANTEE if strand.trace[pos].direction == "send" else RELY
            out.append(AnnotatedNode((si, pos), principal, inst, polarity))
    return out


def shape_obligations(skel) -> list[Obligation]:
    """One implication per non-trivial rely, antecedents from earlier guarantees.

    A guarantee made by the same principal as the relying node is used
    unwrapped; any other principal's guarantee is wrapped in ``says``.
    """
    from .skeleton import order_closure

    anns = shape_annotations(skel)
    before = order_closure(skel)
    guarantees = [a for a in anns if a.polarity == GUARANTEE]
    out: list[Obligation] = []
    for a in anns:
        if a.polarity != RELY:
            continue
        preds = before.get(a.node, set())
        ants = []
        for g in sorted(guarantees, key=lambda g: g.node):
            if g.node in preds:
                ants.append(g.formula if g.principal == a.principal else Says(g.principal, g.formula))
        out.append(Obligation(a.node, a.principal, Implies(tuple(ants), a.formula)))
    return out


VALID, UNKNOWN = "valid", "unknown"


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        out = []
        for p in f.parts:
            out.extend(_conjuncts(p))
        return out
    return [f]


def discharge(ob: Union[Obligation, Implies]) -> str:
    """Check the two syntactic schemata: membership and conjunct projection."""
    f = ob.formula if isinstance(ob, Obligation) else ob
    if has_quantifier(f):
        return UNKNOWN
    goal = f.consequent
    if goal in f.antecedents:
        return VALID
    for ant in f.antecedents:
        if goal in _conjuncts(ant):
            return VALID
        if isinstance(goal, Says) and isinstance(ant, Says) and goal.principal == ant.principal:
            if goal.body == ant.body or goal.body in _conjuncts(ant.body):
                return VALID
    return UNKNOWN


def annotations_to_sexpr(anns: Iterable[AnnotatedNode]) -> SExpr:
    items = [
        slist(slist(*map(_int, a.node)), term_to_sexpr(a.principal), formula_to_sexpr(a.formula))
        for a in anns
    ]
    return slist(sym("annotations"), *items)


def obligations_to_sexpr(obs: Iterable[Obligation]) -> SExpr:
    items = [
        slist(slist(*map(_int, o.node)), term_to_sexpr(o.principal), formula_to_sexpr(o.formula))
        for o in obs
    ]
    return slist(sym("obligations"), *items)


def _int(n: int) -> SExpr:
    from .sexpr import Integer

    return Integer(n)


# ---------------------------------------------------------------------------
# Forward chaining over Horn rules


@dataclass(frozen=True)
class HornRule:
    head: Pred
    body: tuple[Formula, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        bound: set[Var] = set()
        for b in self.body:
            if not isinstance(b, (Pred, Says)):
                raise FormulaError("rule bodies contain predicates or says-predicates only")
            bound |= free_vars(b)
        loose = free_vars(self.head) - bound
        if loose:
            raise FormulaError(f"rule {self.name or self.head.name} is not range-restricted: {sorted(v.name for v in loose)}")


def _match_formula(pat: Formula, fact: Formula, s: dict) -> Optional[dict]:
    """Match a rule body atom against a ground fact; ``says`` is opaque."""

    if type(pat) is not type(fact):
        return None
    if isinstance(pat, Says):
        s2 = _match_fterm(pat.principal, fact.principal, s)
        if s2 is None:
            return None
        return _match_formula(pat.body, fact.body, s2)
    if isinstance(pat, Pred):
        if pat.name != fact.name or len(pat.args) != len(fact.args):
            return None
        cur = s
        for a, b in zip(pat.args, fact.args):
            cur = _match_fterm(a, b, cur)
            if cur is None:
                return None
        return cur
    if isinstance(pat, (And, Or)):
        if len(pat.parts) != len(fact.parts):
            return None
        cur = s
        for a, b in zip(pat.parts, fact.parts):
            cur = _match_formula(a, b, cur)
            if cur is None:
                return None
        return cur
    return dict(s) if pat == fact else None


def _match_fterm(p: FTerm, t: FTerm, s: dict) -> Optional[dict]:
    from .terms import match

    if isinstance(p, App) or isinstance(t, App):
        if not (isinstance(p, App) and isinstance(t, App)) or p.name != t.name or len(p.args) != len(t.args):
            return None
        cur = s
        for a, b in zip(p.args, t.args):
            cur = _match_fterm(a, b, cur)
            if cur is None:
                return None
        return cur
    return match(p, t, s)


def forward_chain(rules: Iterable[HornRule], facts: Iterable[Formula]) -> set[Formula]:
    """Least fixpoint of ``facts`` under ``rules`` (naive iteration)."""
    known = set(facts)
    rules = list(rules)
    changed = True
    while changed:
        changed = False
        for rule in rules:
            for s in _solutions(rule.body, known, {}):
                new = subst_formula(s, rule.head)
                if new not in known:
                    known.add(new)
                    changed = True
    return known


def _solutions(body: tuple[Formula, ...], facts: set[Formula], s: dict):
    if not body:
        yield s
        return
    first, rest = body[0], body[1:]
    for fact in list(facts):
        s2 = _match_formula(first, fact, s)
        if s2 is not None:
            yield from _solutions(rest, facts, s2)


def parse_rule(form: SExpr, scope: Mapping[str, Var]) -> HornRule:
    """``(rule name (head ...) (body1 ...) ...)`` or ``(<- (head ...) body...)``."""
    if not isinstance(form, SList) or form.head not in ("rule", "<-"):
        raise FormulaError("rule form expected")
    items = list(form.items[1:])
    name = ""
    if form.head == "rule":
        if not items or not isinstance(items[0], Symbol):
            raise FormulaError("rule needs a name")
        name = items.pop(0).text
    if not items:
        raise FormulaError("rule needs a head")
    head = parse_formula(items[0], scope)
    if not isinstance(head, Pred):
        raise FormulaError("rule head must be a predicate")
    body = tuple(parse_formula(b, scope) for b in items[1:])
    return HornRule(head, body, name)


def load_theory(forms: Iterable[SExpr]) -> tuple[list[HornRule], set[Formula]]:
    """Read a fact file: ``(vars ...)`` declarations, ``(rule ...)`` forms, and ground facts."""
    from .terms import parse_decls

    scope: dict[str, Var] = {}
    rules: list[HornRule] = []
    facts: set[Formula] = set()
    for form in forms:
        if isinstance(form, SList) and form.head == "vars":
            scope.update(parse_decls(form.items[1:]))
        elif isinstance(form, SList) and form.head in ("rule", "<-"):
            rules.append(parse_rule(form, scope))
        elif isinstance(form, SList) and form.head == "comment":
            continue
        else:
            facts.add(parse_formula(form, scope))
    return rules, facts
