"""Roles and protocols: parsing, validation, and inherited origination assumptions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .annotations import Formula, FormulaError, formula_to_sexpr, parse_formula
from .sexpr import Integer, SExpr, SList, String, Symbol, slist, sym
from .terms import (
    RECV,
    SEND,
    Term,
    TermError,
    Var,
    decls_to_sexpr,
    is_atom,
    originates_at,
    parse_decls,
    parse_term,
    substitute,
    term_to_sexpr,
    variables,
)

LISTENER = "listener"


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class Event:
    direction: str
    message: Term

    def subst(self, s) -> "Event":
        return Event(self.direction, substitute(s, self.message))

    def to_sexpr(self) -> SExpr:
        return slist(sym(self.direction), term_to_sexpr(self.message))


@dataclass(frozen=True)
class Role:
    name: str
    variables: tuple[Var, ...]
    trace: tuple[Event, ...]
    non_orig: tuple[tuple[Optional[int], Term], ...] = ()
    uniq_orig: tuple[Term, ...] = ()
    annotations: Optional[tuple[Term, Mapping[int, Formula]]] = field(default=None, compare=False)

    @property
    def length(self) -> int:
        return len(self.trace)

    def vars_in_prefix(self, height: int) -> set[Var]:
        out: set[Var] = set()
        for ev in self.trace[:height]:
            out |= variables(ev.message)
        return out


@dataclass(frozen=True)
class Protocol:
    name: str
    algebra: str
    roles: tuple[Role, ...]

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise ProtocolError(f"unknown role {name}")


def _int(form: SExpr, what: str) -> int:
    if not isinstance(form, Integer):
        raise ProtocolError(f"{what}: integer expected")
    return form.value


def parse_role(form: SExpr) -> Role:
    if not isinstance(form, SList) or form.head != "defrole" or len(form) < 3:
        raise ProtocolError("malformed defrole")
    name_sym = form.items[1]
    if not isinstance(name_sym, Symbol):
        raise ProtocolError("role name must be a symbol")
    name = name_sym.text
    env: dict[str, Var] = {}
    trace: list[Event] = []
    non_orig: list[tuple[Optional[int], Term]] = []
    uniq: list[Term] = []
    annotations = None
    ann_form = None
    try:
        for clause in form.items[2:]:
            if not isinstance(clause, SList) or clause.head is None:
                raise ProtocolError(f"role {name}: malformed clause")
            head, args = clause.head, clause.items[1:]
            if head == "vars":
                env = parse_decls(args)
            elif head == "trace":
                for ev in args:
                    if not isinstance(ev, SList) or ev.head not in (SEND, RECV) or len(ev) != 2:
                        raise ProtocolError(f"role {name}: events are (send t) or (recv t)")
                    trace.append(Event(ev.head, parse_term(ev.items[1], env)))
            elif head == "non-orig":
                for a in args:
                    if isinstance(a, SList) and a.items and isinstance(a.items[0], Integer):
                        non_orig.append((a.items[0].value, parse_term(a.items[1], env)))
                    else:
                        non_orig.append((None, parse_term(a, env)))
            elif head == "uniq-orig":
                uniq.extend(parse_term(a, env) for a in args)
            elif head == "annotations":
                ann_form = args
            elif head == "comment":
                continue
            else:
                raise ProtocolError(f"role {name}: unknown clause {head}")
    except TermError as exc:
        raise ProtocolError(f"role {name}: {exc}") from exc

    if not trace:
        raise ProtocolError(f"role {name}: trace must be nonempty")
    trace_vars: set[Var] = set()
    for ev in trace:
        trace_vars |= variables(ev.message)
    for h, a in non_orig:
        if not is_atom(a):
            raise ProtocolError(f"role {name}: non-orig {a!r} is not an atom")
        if h is not None and not 1 <= h <= len(trace):
            raise ProtocolError(f"role {name}: height {h} out of range")
        if not variables(a) <= trace_vars:
            raise ProtocolError(f"role {name}: non-orig {a!r} mentions variables outside the trace")
    for a in uniq:
        if not is_atom(a):
            raise ProtocolError(f"role {name}: uniq-orig {a!r} is not an atom")
        if originates_at(trace, a) is None:
            raise ProtocolError(f"role {name}: uniq-orig {a!r} does not originate")
    unused = [v.name for v in env.values() if v not in trace_vars]
    if unused:
        warnings.warn(f"role {name}: declared but unused variables {unused}", stacklevel=2)

    if ann_form is not None:
        if not ann_form:
            raise ProtocolError(f"role {name}: annotations need a principal")
        try:
            principal = parse_term(ann_form[0], env)
            table: dict[int, Formula] = {}
            for entry in ann_form[1:]:
                if not isinstance(entry, SList) or len(entry) != 2:
                    raise ProtocolError(f"role {name}: malformed annotation")
                pos = _int(entry.items[0], "annotation position")
                if not 0 <= pos < len(trace):
                    raise ProtocolError(f"role {name}: annotation position {pos} out of range")
                table[pos] = parse_formula(entry.items[1], env)
        except (TermError, FormulaError) as exc:
            raise ProtocolError(f"role {name}: {exc}") from exc
        annotations = (principal, table)

    return Role(name, tuple(env.values()), tuple(trace), tuple(non_orig), tuple(uniq), annotations)


def parse_protocol(form: SExpr) -> Protocol:
    if not isinstance(form, SList) or form.head != "defprotocol" or len(form) < 4:
        raise ProtocolError("malformed defprotocol")
    name, algebra = form.items[1], form.items[2]
    if not isinstance(name, Symbol) or not isinstance(algebra, Symbol):
        raise ProtocolError("defprotocol needs a name and an algebra")
    if algebra.text != "basic":
        raise ProtocolError(f"unsupported algebra {algebra.text}")
    roles = []
    for r in form.items[3:]:
        if isinstance(r, SList) and r.head == "comment":
            continue
        roles.append(parse_role(r))
    names = [r.name for r in roles]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ProtocolError(f"duplicate role names {sorted(dupes)}")
    if LISTENER in names:
        raise ProtocolError("the listener role name is reserved")
    return Protocol(name.text, algebra.text, tuple(roles))


def inherited_assumptions(role: Role, height: int, subst: Mapping[Var, Term]) -> tuple[set[Term], set[Term]]:
    """Assumptions a strand of ``role`` with the given height inherits.

    Non-origination atoms whose variables do not all occur in the trace
    prefix are deferred (left out) until the strand is long enough.
    """
    if not 1 <= height <= role.length:
        raise ProtocolError(f"height {height} out of range for role {role.name}")
    present = role.vars_in_prefix(height)
    non_orig = set()
    for h, atom in role.non_orig:
        if h is not None and h > height:
            continue
        if not variables(atom) <= present:
            continue
        non_orig.add(substitute(subst, atom))
    uniq = set()
    for atom in role.uniq_orig:
        pos = originates_at(role.trace, atom)
        if pos is not None and pos < height:
            uniq.add(substitute(subst, atom))
    return non_orig, uniq


def role_to_sexpr(role: Role) -> SExpr:
    items: list[SExpr] = [sym("defrole"), sym(role.name)]
    items.append(slist(sym("vars"), *decls_to_sexpr(role.variables, order=_decl_order(role.variables))))
    items.append(slist(sym("trace"), *[e.to_sexpr() for e in role.trace]))
    if role.non_orig:
        nos = [
            term_to_sexpr(a) if h is None else slist(Integer(h), term_to_sexpr(a))
            for h, a in role.non_orig
        ]
        items.append(slist(sym("non-orig"), *nos))
    if role.uniq_orig:
        items.append(slist(sym("uniq-orig"), *[term_to_sexpr(a) for a in role.uniq_orig]))
    if role.annotations is not None:
        principal, table = role.annotations
        entries = [slist(Integer(p), formula_to_sexpr(table[p])) for p in sorted(table)]
        items.append(slist(sym("annotations"), term_to_sexpr(principal), *entries))
    return SList(tuple(items))


def _decl_order(vs) -> tuple[str, ...]:
    seen: list[str] = []
    for v in vs:
        if v.sort not in seen:
            seen.append(v.sort)
    return tuple(seen)


def protocol_to_sexpr(p: Protocol) -> SExpr:
    return slist(sym("defprotocol"), sym(p.name), sym(p.algebra), *[role_to_sexpr(r) for r in p.roles])


@dataclass(frozen=True)
class Herald:
    title: str = ""
    bound: Optional[int] = None
    check_nonces: bool = False


def parse_herald(form: SExpr) -> Herald:
    if not isinstance(form, SList) or form.head != "herald":
        raise ProtocolError("herald form expected")
    title = ""
    bound = None
    check = False
    for item in form.items[1:]:
        if isinstance(item, String):
            title = item.text
        elif isinstance(item, SList) and item.head == "bound" and len(item) == 2:
            bound = _int(item.items[1], "bound")
        elif isinstance(item, SList) and item.head == "check-nonces":
            check = True
    return Herald(title, bound, check)
