"""Skeletons: strand instances, node orderings, origination, comparison."""

from __future__ import annotations

from collections import defaultdict
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional

from .protocol import LISTENER, Event, Protocol, ProtocolError, Role, inherited_assumptions
from .sexpr import Integer, SExpr, SList, Symbol, slist, sym
from .terms import (
    AKEY,
    DATA,
    MESG,
    NAME,
    RECV,
    SEND,
    SKEY,
    TEXT,
    Invk,
    Ltk,
    Privk,
    Pubk,
    Term,
    TermError,
    Var,
    can_bind,
    carries,
    decls_to_sexpr,
    is_atom,
    originates_at,
    parse_decls,
    parse_term,
    substitute,
    term_to_sexpr,
    variables,
)

Node = tuple[int, int]
SORT_ORDER = (MESG, TEXT, DATA, NAME, SKEY, AKEY)


class SkeletonError(Exception):
    pass


class Strand:
    """A role instance (``role`` set) or a listener (``listens`` set)."""

    __slots__ = ("role", "height", "env", "trace", "listens")

    def __init__(self, role: Optional[Role], height: int, env: Mapping[Var, Term], trace: tuple[Event, ...], listens: Optional[Term] = None):
        self.role = role
        self.height = height
        self.env = dict(env)
        self.trace = trace
        self.listens = listens

    @property
    def role_name(self) -> str:
        return self.role.name if self.role is not None else LISTENER

    def subst(self, s) -> "Strand":
        if not s:
            return self
        if self.role is None:
            t = substitute(s, self.listens)
            return listener(t)
        env = {rv: substitute(s, t) for rv, t in self.env.items()}
        return Strand(self.role, self.height, env, tuple(e.subst(s) for e in self.trace))

    def __repr__(self):
        return f"Strand({self.role_name} {self.height})"


def instantiate(role: Role, height: int, env: Mapping[Var, Term]) -> Strand:
    if not 1 <= height <= role.length:
        raise SkeletonError(f"height {height} out of range for role {role.name}")
    present = role.vars_in_prefix(height)
    missing = present - set(env)
    if missing:
        raise SkeletonError(f"strand of {role.name} leaves {sorted(v.name for v in missing)} unbound")
    env = {v: t for v, t in env.items() if v in present}
    for v, t in env.items():
        if not can_bind(v, t):
            raise SkeletonError(f"maplet sort clash: {v.name} ({v.sort}) cannot be {t!r}")
    trace = tuple(e.subst(env) for e in role.trace[:height])
    return Strand(role, height, env, trace)


def listener(t: Term) -> Strand:
    return Strand(None, 2, {}, (Event(RECV, t), Event(SEND, t)), listens=t)


class Skeleton:
    """Strands plus cross-strand orderings and origination assumptions.

    ``precedes`` always holds the cross-strand edges of the transitive
    reduction, so equal orders have equal edge sets.
    """

    def __init__(
        self,
        protocol: Protocol,
        strands: Iterable[Strand],
        precedes: Iterable[tuple[Node, Node]] = (),
        non_orig: Iterable[Term] = (),
        uniq_orig: Iterable[Term] = (),
        reduce: bool = True,
    ):
        self.protocol = protocol
        self.strands = tuple(strands)
        edges = frozenset(precedes)
        for a, b in edges:
            for s, p in (a, b):
                if not (0 <= s < len(self.strands) and 0 <= p < self.strands[s].height):
                    raise SkeletonError(f"node ({s} {p}) out of range")
        self.non_orig = frozenset(non_orig)
        self.uniq_orig = frozenset(uniq_orig)
        if reduce and edges:
            pairs = self._closure_pairs(edges)
            # A cyclic order has no reduction; keep it as given so validate can see it.
            if all(a != b for a, b in pairs):
                edges = frozenset(cross_strand(transitive_reduce(pairs)))
        self.precedes = edges

    # -- structure ---------------------------------------------------------

    def _closure_pairs(self, edges) -> set[tuple[Node, Node]]:
        before = _predecessors(self.strands, edges)
        return {(m, n) for n, ms in before.items() for m in ms}

    def nodes(self) -> Iterator[Node]:
        for s, st in enumerate(self.strands):
            for p in range(st.height):
                yield (s, p)

    def event(self, n: Node) -> Event:
        return self.strands[n[0]].trace[n[1]]

    @cached_property
    def before(self) -> dict[Node, frozenset[Node]]:
        """node -> nodes strictly preceding it."""
        return _predecessors(self.strands, self.precedes)

    @cached_property
    def variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for st in self.strands:
            for ev in st.trace:
                for v in _ordered_vars(ev.message):
                    seen.setdefault(v, None)
        return list(seen)

    @cached_property
    def origination(self) -> dict[Term, list[Node]]:
        """uniq atom -> every node where it originates (one per strand at most)."""
        out: dict[Term, list[Node]] = {}
        for u in self.uniq_orig:
            out[u] = []
            for s, st in enumerate(self.strands):
                for p, ev in enumerate(st.trace):
                    if carries(ev.message, u):
                        if ev.direction == SEND:
                            out[u].append((s, p))
                        break
        return out

    @cached_property
    def originating_uniq(self) -> frozenset[Term]:
        return frozenset(u for u, ns in self.origination.items() if ns)

    def subst(self, s) -> "Skeleton":
        if not s:
            return self
        return Skeleton(
            self.protocol,
            [st.subst(s) for st in self.strands],
            self.precedes,
            {substitute(s, a) for a in self.non_orig},
            {substitute(s, a) for a in self.uniq_orig},
            reduce=False,
        )

    def add_strand(self, st: Strand, edges: Iterable[tuple[Node, Node]] = ()) -> "Skeleton":
        non_orig, uniq = set(self.non_orig), set(self.uniq_orig)
        if st.role is not None:
            no, uo = inherited_assumptions(st.role, st.height, st.env)
            non_orig |= no
            uniq |= uo
        return Skeleton(self.protocol, self.strands + (st,), set(self.precedes) | set(edges), non_orig, uniq)

    def with_edges(self, edges: Iterable[tuple[Node, Node]]) -> "Skeleton":
        return Skeleton(self.protocol, self.strands, set(self.precedes) | set(edges), self.non_orig, self.uniq_orig)

    def is_acyclic(self) -> bool:
        return all(n not in ms for n, ms in self.before.items())

    def __repr__(self):
        return f"Skeleton({', '.join(map(repr, self.strands))})"


def _ordered_vars(t: Term) -> list[Var]:
    out: list[Var] = []
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Var):
            if u not in out:
                out.append(u)
            continue
        from .terms import children

        stack.extend(reversed(children(u)))
    return out


def _predecessors(strands, edges) -> dict[Node, frozenset[Node]]:
    into: dict[Node, list[Node]] = defaultdict(list)
    for a, b in edges:
        into[b].append(a)
    memo: dict[Node, frozenset[Node]] = {}
    order = []
    for s, st in enumerate(strands):
        for p in range(st.height):
            order.append((s, p))

    def direct(n: Node) -> list[Node]:
        s, p = n
        out = list(into.get(n, ()))
        if p > 0:
            out.append((s, p - 1))
        return out

    # Iterative DFS with cycle tolerance: a node in a cycle ends up preceding itself.
    for root in order:
        if root in memo:
            continue
        seen = set()
        stack = list(direct(root))
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            if m in memo:
                seen |= memo[m]
                continue
            stack.extend(direct(m))
        memo[root] = frozenset(seen)
    return memo


def order_closure(s: Skeleton) -> dict[Node, frozenset[Node]]:
    """Strict order as a map from each node to the nodes before it."""
    return s.before


def closure_pairs(s: Skeleton) -> set[tuple[Node, Node]]:
    return {(m, n) for n, ms in s.before.items() for m in ms}


def transitive_reduce(rel: Iterable[tuple[Node, Node]]) -> set[tuple[Node, Node]]:
    """Minimal relation with the same transitive closure (input must be acyclic)."""
    rel = set(rel)
    succ: dict[Node, set[Node]] = defaultdict(set)
    for a, b in rel:
        succ[a].add(b)
    reach: dict[Node, set[Node]] = {}

    def reachable(a: Node) -> set[Node]:
        if a in reach:
            return reach[a]
        reach[a] = set()
        out: set[Node] = set()
        for b in succ.get(a, ()):
            out.add(b)
            out |= reachable(b)
        reach[a] = out
        return out

    keep = set()
    for a, b in rel:
        if not any(b in reachable(c) for c in succ[a] if c != b):
            keep.add((a, b))
    return keep


def cross_strand(rel: Iterable[tuple[Node, Node]]) -> set[tuple[Node, Node]]:
    return {(a, b) for a, b in rel if a[0] != b[0]}


# ---------------------------------------------------------------------------
# Validation and conversion


def validate(s: Skeleton, preskeleton: bool = False) -> list[str]:
    """Return violated invariants (empty when ``s`` is a valid skeleton)."""
    problems: list[str] = []
    for a, b in s.precedes:
        if a[0] == b[0]:
            problems.append(f"intra-strand edge {a} -> {b}")
        if s.event(a).direction != SEND or s.event(b).direction != RECV:
            problems.append(f"edge {a} -> {b} is not transmission to reception")
    if not s.is_acyclic():
        problems.append("ordering is cyclic")
    present: set[Var] = set(s.variables)
    for a in s.non_orig:
        if not is_atom(a):
            problems.append(f"non-orig {a!r} is not an atom")
        if not variables(a) <= present:
            problems.append(f"non-orig {a!r} mentions variables absent from every trace")
        for n in s.nodes():
            if carries(s.event(n).message, a):
                problems.append(f"non-orig {a!r} carried at {n}")
                break
    for k, st in enumerate(s.strands):
        if st.role is None:
            continue
        for a in st.role.uniq_orig:
            pos = originates_at(st.role.trace, a)
            if pos is not None and pos < st.height and originates_at(st.trace, substitute(st.env, a)) != pos:
                problems.append(f"role uniq-orig {a!r} no longer originates at ({k} {pos})")
    for u, origins in s.origination.items():
        if not is_atom(u):
            problems.append(f"uniq-orig {u!r} is not an atom")
        if len(origins) > 1:
            problems.append(f"uniq-orig {u!r} originates at {origins}")
        if preskeleton or len(origins) != 1:
            continue
        o = origins[0]
        for n in s.nodes():
            if n[0] != o[0] and carries(s.event(n).message, u) and o not in s.before[n]:
                problems.append(f"uniq-orig {u!r} reaches {n} without following its origin {o}")
                break
    return problems


def origination_edges(s: Skeleton) -> set[tuple[Node, Node]]:
    edges = set()
    for u, origins in s.origination.items():
        if len(origins) != 1:
            continue
        o = origins[0]
        for t, st in enumerate(s.strands):
            if t == o[0]:
                continue
            for p, ev in enumerate(st.trace):
                if carries(ev.message, u):
                    if ev.direction == RECV:
                        edges.add((o, (t, p)))
                    break
    return edges


def to_skeleton(p: Skeleton) -> Skeleton:
    """Add origination orderings; reject double origination and cycles."""
    for u, origins in p.origination.items():
        if len(origins) > 1:
            raise SkeletonError(f"uniq-orig {u!r} originates on more than one strand")
    s = p.with_edges(origination_edges(p))
    problems = validate(s)
    if problems:
        raise SkeletonError("; ".join(problems))
    return s


def merge_strands(s: Skeleton, i: int, j: int) -> Optional[Skeleton]:
    """Identify strands ``i`` < ``j`` of one role by unifying their common prefix."""
    from .terms import unify_all

    a, b = s.strands[i], s.strands[j]
    if a.role is None or b.role is None or a.role.name != b.role.name:
        return None
    h = min(a.height, b.height)
    pairs = [(x.message, y.message) for x, y in zip(a.trace[:h], b.trace[:h])]
    sigma = unify_all(pairs)
    if sigma is None:
        return None
    s = s.subst(sigma)
    a, b = s.strands[i], s.strands[j]
    keep = a if a.height >= b.height else b
    merged = Strand(keep.role, keep.height, keep.env, keep.trace)

    def renum(n: Node) -> Node:
        t, p = n
        if t == j:
            return (i, p)
        return (t - 1, p) if t > j else n

    edges = set()
    for x, y in s.precedes:
        x2, y2 = renum(x), renum(y)
        if x2[0] == y2[0]:
            if x2[1] >= y2[1]:
                return None
            continue
        edges.add((x2, y2))
    strands = list(s.strands)
    strands[i] = merged
    del strands[j]
    non_orig, uniq = set(s.non_orig), set(s.uniq_orig)
    no, uo = inherited_assumptions(merged.role, merged.height, merged.env)
    return Skeleton(s.protocol, strands, edges, non_orig | no, uniq | uo)


def hull(s: Skeleton) -> Optional[Skeleton]:
    """Merge same-role strands that originate a common uniq atom, then order origins.

    Returns None when no valid skeleton results.
    """
    while True:
        clash = None
        for u, origins in s.origination.items():
            if len(origins) > 1:
                clash = origins
                break
        if clash is None:
            break
        i, j = sorted({clash[0][0], clash[1][0]})
        merged = merge_strands(s, i, j)
        if merged is None:
            return None
        s = merged
    s = s.with_edges(origination_edges(s))
    if validate(s):
        return None
    return s


# ---------------------------------------------------------------------------
# Naming


def fresh_var(v: Var, taken: set[str]) -> Var:
    if v.name not in taken:
        return v
    base = v.name
    k = 0
    while f"{base}-{k}" in taken:
        k += 1
    return Var(f"{base}-{k}", v.sort)


def fresh_instance_env(role: Role, taken: set[str]) -> dict[Var, Term]:
    """Map every role variable to a variable not named in ``taken``."""
    taken = set(taken)
    env = {}
    for v in role.variables:
        nv = fresh_var(v, taken)
        taken.add(nv.name)
        env[v] = nv
    return env


def var_names(s: Skeleton) -> set[str]:
    names = {v.name for v in s.variables}
    for a in s.non_orig | s.uniq_orig:
        names |= {v.name for v in variables(a)}
    return names


# ---------------------------------------------------------------------------
# Problem statements


def _node(form: SExpr) -> Node:
    if not (isinstance(form, SList) and len(form) == 2 and all(isinstance(x, Integer) for x in form.items)):
        raise SkeletonError("node (strand position) expected")
    return (form.items[0].value, form.items[1].value)


def parse_problem(form: SExpr, protocols: Mapping[str, Protocol]) -> Skeleton:
    """Build the preskeleton described by a ``defskeleton`` form."""
    if not isinstance(form, SList) or form.head != "defskeleton" or len(form) < 3:
        raise SkeletonError("malformed defskeleton")
    pname = form.items[1]
    if not isinstance(pname, Symbol) or pname.text not in protocols:
        raise SkeletonError(f"unknown protocol {pname}")
    proto = protocols[pname.text]
    env: dict[str, Var] = {}
    strands: list[Strand] = []
    edges: set[tuple[Node, Node]] = set()
    non_orig: set[Term] = set()
    uniq: set[Term] = set()
    pending: list[tuple[Role, int, list[tuple[SExpr, SExpr]]]] = []
    try:
        for clause in form.items[2:]:
            if not isinstance(clause, SList) or clause.head is None:
                raise SkeletonError("malformed defskeleton clause")
            head, args = clause.head, clause.items[1:]
            if head == "vars":
                env = parse_decls(args)
            elif head == "defstrand":
                if len(args) < 2 or not isinstance(args[0], Symbol) or not isinstance(args[1], Integer):
                    raise SkeletonError("(defstrand role height maplet...) expected")
                try:
                    role = proto.role(args[0].text)
                except ProtocolError as exc:
                    raise SkeletonError(str(exc)) from exc
                height = args[1].value
                if not 1 <= height <= role.length:
                    raise SkeletonError(f"height {height} out of range for role {role.name}")
                maplets = []
                for m in args[2:]:
                    if not isinstance(m, SList) or len(m) != 2 or not isinstance(m.items[0], Symbol):
                        raise SkeletonError("malformed maplet")
                    maplets.append((m.items[0], m.items[1]))
                pending.append((role, height, maplets))
                strands.append(None)  # placeholder keeps list positions
            elif head == "deflistener":
                if len(args) != 1:
                    raise SkeletonError("(deflistener term) expected")
                pending.append((None, 2, [args[0]]))
                strands.append(None)
            elif head == "precedes":
                for pair in args:
                    if not isinstance(pair, SList) or len(pair) != 2:
                        raise SkeletonError("malformed precedes pair")
                    edges.add((_node(pair.items[0]), _node(pair.items[1])))
            elif head == "non-orig":
                non_orig |= {parse_term(a, env) for a in args}
            elif head == "uniq-orig":
                uniq |= {parse_term(a, env) for a in args}
            # Output-only fields (traces, label, ...) are ignored here.
        taken = set(env)
        for idx, (role, height, maplets) in enumerate(pending):
            if role is None:
                strands[idx] = listener(parse_term(maplets[0], env))
                continue
            role_env = {v.name: v for v in role.variables}
            inst: dict[Var, Term] = {}
            for rv, val in maplets:
                if rv.text not in role_env:
                    raise SkeletonError(f"{rv.text} is not a variable of role {role.name}")
                inst[role_env[rv.text]] = parse_term(val, env)
            present = role.vars_in_prefix(height)
            for v in role.variables:
                if v in present and v not in inst:
                    nv = fresh_var(v, taken)
                    taken.add(nv.name)
                    inst[v] = nv
            strands[idx] = instantiate(role, height, inst)
    except TermError as exc:
        raise SkeletonError(str(exc)) from exc
    for st in strands:
        if st.role is not None:
            no, uo = inherited_assumptions(st.role, st.height, st.env)
            non_orig |= no
            uniq |= uo
    return Skeleton(proto, strands, edges, non_orig, uniq)


# ---------------------------------------------------------------------------
# Printing


def _atom_rank(a: Term) -> tuple:
    rank = {Ltk: 0, Invk: 1, Privk: 2, Pubk: 3}.get(type(a), 4)
    return (rank, repr(a))


def skeleton_to_sexpr(s: Skeleton, extra: Iterable[SExpr] = (), with_traces: bool = True) -> SList:
    items: list[SExpr] = [sym("defskeleton"), sym(s.protocol.name)]
    items.append(slist(sym("vars"), *decls_to_sexpr(s.variables, SORT_ORDER)))
    for st in s.strands:
        if st.role is None:
            items.append(slist(sym("deflistener"), term_to_sexpr(st.listens)))
            continue
        order = {srt: k for k, srt in enumerate(SORT_ORDER)}
        rvs = sorted(
            (v for v in st.role.variables if v in st.env),
            key=lambda v: (order[v.sort], st.role.variables.index(v)),
        )
        maplets = [slist(sym(v.name), term_to_sexpr(st.env[v])) for v in rvs]
        items.append(slist(sym("defstrand"), sym(st.role.name), Integer(st.height), *maplets))
    if s.precedes:
        pairs = sorted(s.precedes)
        items.append(
            slist(
                sym("precedes"),
                *[slist(slist(Integer(a[0]), Integer(a[1])), slist(Integer(b[0]), Integer(b[1]))) for a, b in pairs],
            )
        )
    if s.non_orig:
        items.append(slist(sym("non-orig"), *[term_to_sexpr(a) for a in sorted(s.non_orig, key=_atom_rank)]))
    if s.uniq_orig:
        items.append(slist(sym("uniq-orig"), *[term_to_sexpr(a) for a in sorted(s.uniq_orig, key=_atom_rank)]))
    extra = list(extra)
    ops = [e for e in extra if isinstance(e, SList) and e.head == "operation"]
    rest = [e for e in extra if not (isinstance(e, SList) and e.head == "operation")]
    items.extend(ops)
    if with_traces:
        items.append(slist(sym("traces"), *[slist(*[e.to_sexpr() for e in st.trace]) for st in s.strands]))
    items.extend(rest)
    return SList(tuple(items))


# ---------------------------------------------------------------------------
# Comparison


def strand_signature(st: Strand) -> tuple:
    return (st.role_name, st.height)


def _rename_match(p: Term, t: Term, fwd: dict, bwd: dict) -> bool:
    """Match allowing only an injective variable-to-variable renaming."""
    if isinstance(p, Var):
        if not isinstance(t, Var) or p.sort != t.sort:
            return False
        if p in fwd:
            return fwd[p] == t
        if t in bwd:
            return False
        fwd[p] = t
        bwd[t] = p
        return True
    if type(p) is not type(t):
        return False
    from .terms import Tag, children

    if isinstance(p, Tag):
        return p.text == t.text
    return all(_rename_match(a, b, fwd, bwd) for a, b in zip(children(p), children(t)))


def isomorphic(a: Skeleton, b: Skeleton) -> bool:
    return find_isomorphism(a, b) is not None


def find_isomorphism(a: Skeleton, b: Skeleton) -> Optional[tuple[list[int], dict]]:
    """Strand permutation and variable bijection carrying ``a`` onto ``b``."""
    if len(a.strands) != len(b.strands) or len(a.precedes) != len(b.precedes):
        return None
    if len(a.non_orig) != len(b.non_orig) or len(a.uniq_orig) != len(b.uniq_orig):
        return None
    if sorted(map(strand_signature, a.strands)) != sorted(map(strand_signature, b.strands)):
        return None
    n = len(a.strands)
    # Try the most constrained strands first.
    order = sorted(range(n), key=lambda i: -a.strands[i].height)
    perm = [-1] * n
    used = [False] * n

    def finish(fwd, bwd) -> bool:
        mapped = {((perm[x[0]], x[1]), (perm[y[0]], y[1])) for x, y in a.precedes}
        if mapped != set(b.precedes):
            return False
        for sa, sb in ((a.non_orig, b.non_orig), (a.uniq_orig, b.uniq_orig)):
            img = set()
            for t in sa:
                f2, b2 = dict(fwd), dict(bwd)
                hit = None
                for u in sb:
                    f3, b3 = dict(f2), dict(b2)
                    if _rename_match(t, u, f3, b3):
                        hit = u
                        fwd.update(f3)
                        bwd.update(b3)
                        break
                if hit is None:
                    return False
                img.add(hit)
            if img != set(sb):
                return False
        return True

    def go(k: int, fwd: dict, bwd: dict):
        if k == n:
            f2, b2 = dict(fwd), dict(bwd)
            return (list(perm), f2) if finish(f2, b2) else None
        i = order[k]
        sa = a.strands[i]
        for j in range(n):
            if used[j] or strand_signature(b.strands[j]) != strand_signature(sa):
                continue
            f2, b2 = dict(fwd), dict(bwd)
            if all(
                x.direction == y.direction and _rename_match(x.message, y.message, f2, b2)
                for x, y in zip(sa.trace, b.strands[j].trace)
            ):
                used[j] = True
                perm[i] = j
                r = go(k + 1, f2, b2)
                if r is not None:
                    return r
                used[j] = False
                perm[i] = -1
        return None

    return go(0, {}, {})


def iso_key(s: Skeleton) -> tuple:
    """Cheap invariant: isomorphic skeletons share it."""
    def shape(t: Term):
        from .terms import Tag, children

        if isinstance(t, Var):
            return t.sort
        if isinstance(t, Tag):
            return ("tag", t.text)
        return (type(t).__name__,) + tuple(shape(c) for c in children(t))

    strands = sorted(
        (st.role_name, st.height, tuple((e.direction, shape(e.message)) for e in st.trace)) for st in s.strands
    )
    return (tuple(strands), len(s.precedes), len(s.non_orig), len(s.uniq_orig))


def specializes(
    general: Skeleton, specific: Skeleton, fixed: int = 0, pin: Optional[Mapping[int, int]] = None
) -> Optional[tuple[list[int], dict]]:
    """Find a homomorphism from ``general`` into ``specific``.

    Strands below index ``fixed`` (the problem statement) must map to
    themselves; ``pin`` forces further strand images.  Strand maps need
    not be injective.
    """
    from .terms import match

    gs, ss = general.strands, specific.strands
    order = sorted(range(len(gs)), key=lambda i: (i >= fixed, -gs[i].height))
    phi = [-1] * len(gs)
    spec_before = specific.before

    def trace_match(st: Strand, tgt: Strand, s: dict) -> Optional[dict]:
        if st.role_name != tgt.role_name or st.height > tgt.height:
            return None
        cur = s
        for x, y in zip(st.trace, tgt.trace):
            if x.direction != y.direction:
                return None
            cur = match(x.message, y.message, cur)
            if cur is None:
                return None
        return cur

    def check(s: dict) -> bool:
        for x, y in general.precedes:
            nx, ny = (phi[x[0]], x[1]), (phi[y[0]], y[1])
            if nx not in spec_before.get(ny, ()):
                return False
        if not {substitute(s, t) for t in general.non_orig} <= specific.non_orig:
            return False
        if not {substitute(s, t) for t in general.uniq_orig} <= specific.uniq_orig:
            return False
        for u, origins in general.origination.items():
            su = substitute(s, u)
            for o in origins:
                if (phi[o[0]], o[1]) not in specific.origination.get(su, ()):
                    return False
        return True

    def go(k: int, s: dict):
        if k == len(order):
            return (list(phi), s) if check(s) else None
        i = order[k]
        if pin is not None and i in pin:
            targets = [pin[i]]
        else:
            targets = [i] if i < fixed else range(len(ss))
        for j in targets:
            if j >= len(ss):
                continue
            s2 = trace_match(gs[i], ss[j], s)
            if s2 is None:
                continue
            phi[i] = j
            r = go(k + 1, s2)
            if r is not None:
                return r
            phi[i] = -1
        return None

    return go(0, {})


def remove_strand(s: Skeleton, i: int) -> Skeleton:
    """Delete strand ``i``, keeping the order it induced among the rest."""
    def renum(n: Node) -> Node:
        return (n[0] - 1, n[1]) if n[0] > i else n

    pairs = {(m, n) for n, ms in s.before.items() for m in ms if m[0] != i and n[0] != i}
    strands = s.strands[:i] + s.strands[i + 1 :]
    present: set[Var] = set()
    for st in strands:
        for ev in st.trace:
            present |= variables(ev.message)
    keep = lambda a: variables(a) <= present
    return Skeleton(
        s.protocol,
        strands,
        {(renum(m), renum(n)) for m, n in pairs},
        {a for a in s.non_orig if keep(a)},
        {a for a in s.uniq_orig if keep(a)},
    )


def prune(s: Skeleton, fixed: int = 0) -> Skeleton:
    """Repeatedly drop strands that collapse onto another strand.

    Strand ``i`` is redundant when the skeleton maps homomorphically onto
    the skeleton without ``i``, sending ``i`` to some other strand and
    every remaining strand to itself.
    """
    changed = True
    while changed:
        changed = False
        for i in range(len(s.strands) - 1, fixed - 1, -1):
            si = s.strands[i]
            smaller = None
            for j, sj in enumerate(s.strands):
                if j == i or sj.role_name != si.role_name or sj.height < si.height:
                    continue
                if smaller is None:
                    smaller = remove_strand(s, i)
                pin = {k: (k if k < i else k - 1) for k in range(len(s.strands)) if k != i}
                pin[i] = j if j < i else j - 1
                if specializes(s, smaller, pin=pin) is not None:
                    s = smaller
                    changed = True
                    break
            if changed:
                break
    return s
