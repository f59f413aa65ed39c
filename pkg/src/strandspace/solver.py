"""Bounded shape search driven by nonce tests and encryption tests."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .adversary import Knowledge, node_context, unrealized_nodes
from .protocol import SEND
from .sexpr import Integer, SExpr, slist, sym
from .skeleton import (
    Node,
    Skeleton,
    fresh_instance_env,
    hull,
    instantiate,
    iso_key,
    isomorphic,
    listener,
    merge_strands,
    prune,
    specializes,
    to_skeleton,
    var_names,
)
from .terms import (
    Cat,
    Enc,
    Tag,
    Term,
    carried_outside,
    carried_subterms,
    carries,
    compose,
    inverse_key,
    outside_ancestors,
    substitute,
    term_to_sexpr,
    unify,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    strand_bound: int = 12
    check_nonces_first: bool = True
    step_limit: int = 2000
    # Called with every skeleton the search builds, kept or not.
    observe: Optional[Callable[[Skeleton], None]] = field(default=None, compare=False, repr=False)


NONCE_TEST, ENCRYPTION_TEST = "nonce-test", "encryption-test"


@dataclass(frozen=True)
class Test:
    kind: str
    critical: Term
    node: Node
    escape: tuple[Term, ...]


@dataclass(frozen=True)
class OperationRecord:
    kind: str
    action: str  # contracted | added-ordering | displaced | added-strand | added-listener
    detail: tuple
    critical: Term
    at: Node
    escape: tuple[Term, ...]

    def to_sexpr(self) -> SExpr:
        if self.action == "contracted":
            act = slist(sym("contracted"), *[slist(term_to_sexpr(v), term_to_sexpr(t)) for v, t in self.detail])
        elif self.action == "added-strand":
            act = slist(sym("added-strand"), sym(self.detail[0]), Integer(self.detail[1]))
        elif self.action == "displaced":
            j, role, height = self.detail
            act = slist(sym("displaced"), Integer(j), sym(role), Integer(height))
        elif self.action == "added-ordering":
            (a, b), = self.detail
            act = slist(sym("added-ordering"), slist(Integer(a), Integer(b)))
        else:
            act = slist(sym("added-listener"), term_to_sexpr(self.detail[0]))
        node = slist(Integer(self.at[0]), Integer(self.at[1]))
        return slist(sym("operation"), sym(self.kind), act, term_to_sexpr(self.critical), node,
                     *[term_to_sexpr(e) for e in self.escape])


@dataclass
class TreeNode:
    label: int
    skeleton: Skeleton
    parent: Optional[int]
    operation: Optional[OperationRecord]
    unrealized: list[Node]
    shape: bool = False
    dead: bool = False
    pruned: int = 0
    cohort_size: int = 0
    fresh: int = 0


@dataclass
class SearchTree:
    problem: Skeleton
    nodes: dict[int, TreeNode] = field(default_factory=dict)
    root: int = 0
    incomplete: bool = False
    scenario_strands: int = 0

    def shapes(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.shape]


# ---------------------------------------------------------------------------
# Test selection


def _escape_set(k: Knowledge, c: Term) -> tuple[Term, ...]:
    return tuple(sorted((e for e in k.sealed if carries(e, c) and e != c), key=repr))


def node_tests(s: Skeleton, n: Node) -> list[Test]:
    """Every nonce and encryption test that explains why ``n`` is unrealized."""
    k = Knowledge(node_context(s, n))
    t = s.event(n).message
    if k.synth(t):
        return []
    nonces, encs = [], []
    seen = set()
    orig = s.originating_uniq
    for x in carried_subterms(t):
        if x in seen:
            continue
        seen.add(x)
        if x in orig and not k.synth(x):
            esc = _escape_set(k, x)
            if carried_outside(t, x, set(esc)):
                nonces.append(Test(NONCE_TEST, x, n, esc))
        elif isinstance(x, Enc) and not k.synth(x) and not k.synth(x.key):
            esc = _escape_set(k, x)
            if carried_outside(t, x, set(esc)):
                encs.append(Test(ENCRYPTION_TEST, x, n, esc))
    return nonces + encs


def select_test(s: Skeleton, unrealized: list[Node], cfg: SolverConfig) -> Optional[Test]:
    if not unrealized:
        raise ValueError("select_test needs an unrealized node")
    per_node = [node_tests(s, n) for n in unrealized]
    prefer = NONCE_TEST if cfg.check_nonces_first else ENCRYPTION_TEST
    for kind in (prefer, ENCRYPTION_TEST if prefer == NONCE_TEST else NONCE_TEST):
        for tests in per_node:
            for test in tests:
                if test.kind == kind:
                    return test
    return None


# ---------------------------------------------------------------------------
# Cohorts


def _protect(events, c: Term, escape: tuple[Term, ...], sigma: dict, depth: int = 0) -> Iterator[dict]:
    """Extend ``sigma`` until no event in ``events`` carries ``c`` outside ``escape``."""
    cc = substitute(sigma, c)
    esc = {substitute(sigma, e) for e in escape}
    for ev in events:
        msg = substitute(sigma, ev.message)
        if not carried_outside(msg, cc, esc):
            continue
        if depth > 4:
            return
        for anc in outside_ancestors(msg, cc, esc):
            for e in sorted(esc, key=repr):
                tau = unify(anc, e)
                if tau is None:
                    continue
                yield from _protect(events, c, escape, compose(tau, sigma), depth + 1)
        return
    yield sigma


def _contractions(s: Skeleton, test: Test) -> Iterator[tuple[OperationRecord, Skeleton]]:
    t = s.event(test.node).message
    pairs = []
    for anc in outside_ancestors(t, test.critical, set(test.escape)):
        if anc == test.critical:
            continue
        for e in test.escape:
            pairs.append((anc, e))
    if test.kind == ENCRYPTION_TEST:
        k = Knowledge(node_context(s, test.node))
        for e in sorted((x for x in k.known if isinstance(x, Enc)), key=repr):
            pairs.append((test.critical, e))
    for a, b in pairs:
        sigma = unify(a, b)
        if not sigma:
            continue
        child = hull(s.subst(sigma))
        if child is None:
            continue
        detail = tuple(sorted(sigma.items(), key=lambda kv: kv[0].name))
        yield OperationRecord(test.kind, "contracted", detail, test.critical, test.node, test.escape), child


def _augmentations(s: Skeleton, test: Test) -> Iterator[tuple[OperationRecord, Skeleton]]:
    n, c = test.node, test.critical
    t = s.event(n).message
    targets = [c] + [a for a in outside_ancestors(t, c, set(test.escape)) if a != c]
    taken = var_names(s)
    new_index = len(s.strands)
    for role in s.protocol.roles:
        env0 = fresh_instance_env(role, taken)
        full = [e.subst(env0) for e in role.trace]
        for p, ev in enumerate(full):
            if ev.direction != SEND:
                continue
            xs = []
            for x in carried_subterms(ev.message):
                if not isinstance(x, (Cat, Tag)) and x not in xs:
                    xs.append(x)
            for x in xs:
                for y in targets:
                    sigma = unify(x, y)
                    if sigma is None:
                        continue
                    for sigma2 in _protect(full[:p], c, test.escape, sigma):
                        msg = substitute(sigma2, ev.message)
                        cc = substitute(sigma2, c)
                        esc = {substitute(sigma2, e) for e in test.escape}
                        if not carried_outside(msg, cc, esc):
                            continue
                        env = {v: substitute(sigma2, env0[v]) for v in role.variables}
                        strand = instantiate(role, p + 1, env)
                        base = s.subst({v: u for v, u in sigma2.items() if v.name in taken})
                        grown = base.add_strand(strand, {((new_index, p), n)})
                        for j, old in enumerate(s.strands):
                            if old.role_name != role.name:
                                continue
                            merged = merge_strands(grown, j, new_index)
                            merged = hull(merged) if merged is not None else None
                            if merged is not None:
                                detail = (j, role.name, max(p + 1, old.height))
                                yield OperationRecord(test.kind, "displaced", detail, c, n, test.escape), merged
                        child = hull(grown)
                        if child is None:
                            continue
                        yield OperationRecord(test.kind, "added-strand", (role.name, p + 1), c, n, test.escape), child


def _orderings(s: Skeleton, test: Test) -> Iterator[tuple[OperationRecord, Skeleton]]:
    """Existing transmissions that first expose the critical term, ordered before the test node."""
    n, c = test.node, test.critical
    esc = set(test.escape)
    before = s.before[n]
    for k, st in enumerate(s.strands):
        if k == n[0]:
            continue
        for p, ev in enumerate(st.trace):
            if not carried_outside(ev.message, c, esc):
                continue
            m = (k, p)
            if ev.direction == SEND and m not in before:
                child = hull(s.with_edges({(m, n)}))
                if child is not None:
                    yield OperationRecord(test.kind, "added-ordering", (m,), c, n, test.escape), child
            break


def _listeners(s: Skeleton, test: Test) -> Iterator[tuple[OperationRecord, Skeleton]]:
    if test.kind == NONCE_TEST:
        keys = [inverse_key(e.key) for e in test.escape if isinstance(e, Enc)]
    else:
        keys = [test.critical.key]
    present = {st.listens for st in s.strands if st.role is None}
    done = set()
    for key in keys:
        if key in done or key in present or key in s.non_orig:
            continue
        done.add(key)
        child = hull(s.add_strand(listener(key), {((len(s.strands), 1), test.node)}))
        if child is None:
            continue
        yield OperationRecord(test.kind, "added-listener", (key,), test.critical, test.node, test.escape), child


def cohort(
    s: Skeleton, test: Test, cfg: Optional[SolverConfig] = None, fixed: int = 0
) -> list[tuple[OperationRecord, Skeleton]]:
    """Refinements of ``s`` that address ``test``, pruned and deduplicated up to isomorphism.

    Strands below ``fixed`` belong to the problem statement and are never pruned.
    """
    bound = cfg.strand_bound if cfg else None
    out: list[tuple[OperationRecord, Skeleton]] = []
    buckets: dict[tuple, list[Skeleton]] = {}
    for gen in (_contractions, _orderings, _augmentations, _listeners):
        for op, child in gen(s, test):
            child = prune(child, fixed)
            if cfg is not None and cfg.observe is not None:
                cfg.observe(child)
            if not _is_image(s, child, fixed):
                log.debug("dropped non-homomorphic child: %s", op)
                continue
            if bound is not None and len(child.strands) > bound:
                log.debug("pruned child over strand bound: %s", op)
                continue
            key = iso_key(child)
            if any(isomorphic(child, other) for other in buckets.get(key, ())):
                continue
            if isomorphic(child, s):
                continue
            buckets.setdefault(key, []).append(child)
            out.append((op, child))
    return _drop_instances(out, fixed)


def _is_image(parent: Skeleton, child: Skeleton, fixed: int) -> bool:
    """True when ``child`` is a homomorphic image of ``parent``."""
    if len(child.strands) >= len(parent.strands):
        pin = {i: i for i in range(len(parent.strands))}
        if specializes(parent, child, fixed, pin=pin) is not None:
            return True
    return specializes(parent, child, fixed) is not None


def _drop_instances(kids, fixed: int):
    """Remove cohort members that are instances of a sibling (the sibling's subtree covers them)."""
    keep = []
    for b, (op_b, sb) in enumerate(kids):
        covered = False
        for a, (_, sa) in enumerate(kids):
            if a == b or len(sa.strands) > len(sb.strands):
                continue
            if specializes(sa, sb, fixed) is None:
                continue
            # mutual instances: keep the earlier one
            if a < b or specializes(sb, sa, fixed) is None:
                covered = True
                break
        if not covered:
            keep.append((op_b, sb))
    return keep


# ---------------------------------------------------------------------------
# Search


def search(problem: Skeleton, cfg: SolverConfig = SolverConfig()) -> SearchTree:
    """Breadth-first exploration from the problem statement."""
    root = to_skeleton(problem)
    if cfg.observe is not None:
        cfg.observe(root)
    tree = SearchTree(problem, scenario_strands=len(problem.strands))
    label = 0
    tree.nodes[0] = TreeNode(0, root, None, None, unrealized_nodes(root))
    queue = deque([0])
    seen: dict[tuple, list[Skeleton]] = {iso_key(root): [root]}
    realized: list[int] = []
    steps = 0
    while queue:
        if steps >= cfg.step_limit:
            tree.incomplete = True
            break
        steps += 1
        cur = tree.nodes[queue.popleft()]
        if not cur.unrealized:
            realized.append(cur.label)
            continue
        test = select_test(cur.skeleton, cur.unrealized, cfg)
        if test is None:
            cur.dead = True
            continue
        kids = cohort(cur.skeleton, test, cfg, tree.scenario_strands)
        cur.cohort_size = len(kids)
        if not kids:
            cur.dead = True
        for op, child in kids:
            key = iso_key(child)
            bucket = seen.setdefault(key, [])
            if any(isomorphic(child, other) for other in bucket):
                continue
            bucket.append(child)
            cur.fresh += 1
            label += 1
            tree.nodes[label] = TreeNode(label, child, cur.label, op, unrealized_nodes(child))
            queue.append(label)
    for lab in _minimal(tree, realized):
        tree.nodes[lab].shape = True
    return tree


def _minimal(tree: SearchTree, labels: list[int]) -> list[int]:
    """Drop realized skeletons that are instances of another realized skeleton."""
    fixed = tree.scenario_strands
    sk = {lab: tree.nodes[lab].skeleton for lab in labels}

    def rank(lab):
        return (len(sk[lab].strands), lab)

    keep = []
    for b in labels:
        dominated = False
        for a in labels:
            if a == b or specializes(sk[a], sk[b], fixed) is None:
                continue
            if specializes(sk[b], sk[a], fixed) is None or rank(a) < rank(b):
                dominated = True
                break
        if not dominated:
            keep.append(b)
    return keep


def shapes(tree: SearchTree) -> list[Skeleton]:
    return [n.skeleton for n in sorted(tree.shapes(), key=lambda n: n.label)]


def all_skeletons(tree: SearchTree) -> Iterator[Skeleton]:
    for n in tree.nodes.values():
        yield n.skeleton
