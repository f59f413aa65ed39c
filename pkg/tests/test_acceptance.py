"""Acceptance criteria, one test (or a few) per criterion.

Each test records a PASS/FAIL line in ``RESULTS``; the conftest prints
them at the end of the pytest run.  ``python tests/test_acceptance.py``
runs just this file.
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import carried_set, closure_derivable, invk_normal, reduce_randomly, small_terms  # noqa: E402
from strandspace.adversary import DerivationContext, derivable, unrealized_nodes  # noqa: E402
from strandspace.annotations import VALID, discharge, shape_obligations  # noqa: E402
from strandspace.cli import analyze, diff_streams, load_stream, render, solver_config, split_stream  # noqa: E402
from strandspace.corpus import FIXTURES, compare_rely_guarantee, load_fixture  # noqa: E402
from strandspace.sexpr import Integer, SList, String, Symbol, read_all, write, write_all  # noqa: E402
from strandspace.skeleton import find_isomorphism, specializes, strand_signature, validate  # noqa: E402
from strandspace.terms import (  # noqa: E402
    AKEY,
    DATA,
    MESG,
    NAME,
    SKEY,
    TEXT,
    Cat,
    Enc,
    Invk,
    Ltk,
    Privk,
    Pubk,
    Tag,
    Var,
    carries,
    is_atom,
    is_normal,
    match,
    normalize,
    substitute,
    subterms,
    unify,
    variables,
)


# ---------------------------------------------------------------------------
# Result registry


@dataclass
class Results:
    entries: dict[str, tuple[bool, str]] = field(default_factory=dict)

    def record(self, key: str, ok: bool, detail: str = "") -> None:
        self.entries[key] = (ok, detail)

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'}  {key}  {detail}".rstrip() for key, (ok, detail) in self.entries.items()]

    def __bool__(self) -> bool:
        return bool(self.entries)


RESULTS = Results()


def check(key: str, ok: bool, detail: str = "") -> None:
    RESULTS.record(key, ok, detail)
    assert ok, f"{key}: {detail}"


# ---------------------------------------------------------------------------
# Shared fixture runs


@dataclass
class Run:
    name: str
    text: str
    analysis: object
    observed: list
    seconds: float


@lru_cache(maxsize=None)
def run_fixture(name: str) -> Run:
    fx = load_fixture(name)
    observed: list = []
    cfg = replace(solver_config(fx.source, argparse.Namespace()), observe=observed.append)
    start = time.perf_counter()
    an = analyze(fx.source, cfg)
    text = render(an)
    return Run(name, text, an, observed, time.perf_counter() - start)


def _stream(text: str):
    forms = read_all(text)
    from strandspace.cli import _collect_protocols

    protocols: dict = {}
    _collect_protocols(forms, protocols)
    return split_stream(forms), protocols


def _clause(block: SList, head: str):
    for c in block.items[2:]:
        if isinstance(c, SList) and c.head == head:
            return c
    return None


# ---------------------------------------------------------------------------
# 1. Golden reproduction

EXPECTED_STRANDS = {
    "full-verifier": [5],
    "verifier-height-4": [4],
    "attester-safe-channel": [2],
    "attester-compromised": [1],
    "jo-listener": [],
    "p-listener": [],
    "full-server": [5],
    "d-listener": [],
    "full-client": [5],
}


def test_1_golden_reproduction():
    run = run_fixture("caves")
    fx = load_fixture("caves")
    actual, protocols = _stream(run.text)
    appendix, _ = load_stream(fx.path / "appendix.out", protocols)
    golden, _ = load_stream(fx.path / "golden", protocols)
    rep_app = diff_streams(actual, appendix, protocols)
    rep_gold = diff_streams(actual, golden, protocols)
    counts = {
        r.key: sorted(len(n.skeleton.strands) for n in r.tree.shapes()) for r in run.analysis.runs
    }
    problems = [l for l in rep_app.lines + rep_gold.lines if l.startswith("FAIL")]
    if counts != EXPECTED_STRANDS:
        problems.append(f"strand counts {counts}")
    if run.seconds >= 60:
        problems.append(f"took {run.seconds:.1f}s")
    check(
        "1 golden reproduction",
        not problems,
        "; ".join(problems) or f"9 scenarios isomorphic to appendix and golden files in {run.seconds:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. Unrealized-node agreement

EXPECTED_UNREALIZED = {
    0: [(0, 1), (0, 3)],
    61: [(0, 1), (0, 3)],
    66: [(0, 0)],
    73: [(0, 2), (0, 6)],
    107: [(0, 2), (0, 6), (1, 0)],
    157: [(0, 1), (0, 3)],
}


def _nodes(clause):
    return [(a.value, b.value) for a, b in (c.items for c in clause.items[1:])]


def test_2_restatement_unrealized_lists():
    fx = load_fixture("caves")
    actual, _ = _stream(run_fixture("caves").text)
    restated = {sc.key: sc.blocks[0] for sc in actual}
    problems, checked = [], 0
    for key, block in fx.restatements.items():
        label = _clause(block, "label").items[1].value
        reference = _nodes(_clause(block, "unrealized"))
        mine = _nodes(_clause(restated[key], "unrealized"))
        if mine != reference:
            problems.append(f"{key}: {mine} vs appendix {reference}")
        if label in EXPECTED_UNREALIZED:
            checked += 1
            if mine != EXPECTED_UNREALIZED[label]:
                problems.append(f"label {label}: {mine}")
    if checked != len(EXPECTED_UNREALIZED):
        problems.append(f"only {checked} listed labels found")
    check("2 unrealized-node agreement", not problems, "; ".join(problems) or f"{len(fx.restatements)} restatements exact")


# ---------------------------------------------------------------------------
# 3. Rely-guarantee structure


def test_3_annotations_and_obligations():
    fx = load_fixture("caves")
    problems, obligations = [], 0
    for r in run_fixture("caves").analysis.runs:
        for node in r.tree.shapes():
            gs = next(
                (g for g in fx.golden[r.key].shapes if find_isomorphism(node.skeleton, g.skeleton) is not None), None
            )
            if gs is None:
                problems.append(f"{r.key}: no golden partner")
                continue
            problems += [f"{r.key}: {d}" for d in compare_rely_guarantee(node.skeleton, gs)]
            for ob in shape_obligations(node.skeleton):
                obligations += 1
                if discharge(ob) != VALID:
                    problems.append(f"{r.key}: obligation at {ob.node} not valid")
    check(
        "3 annotations/obligations",
        not problems and obligations > 0,
        "; ".join(problems) or f"all shapes match; {obligations} obligations valid",
    )


# ---------------------------------------------------------------------------
# 4. Disagreement regression

S, K, D = Var("s", NAME), Var("k", SKEY), Var("d", TEXT)


def _disagreement(shape):
    """(client index, listener satisfied) when a client disagrees with the server on s and k."""
    server = next(st for st in shape.strands if st.role_name == "server")
    leaks = any(st.listens == server.env[D] for st in shape.strands if st.role_name == "listener")
    for i, st in enumerate(shape.strands):
        if st.role_name == "client" and S in st.env and K in st.env:
            if st.env[S] != server.env[S] and st.env[K] != server.env[K]:
                return i, leaks
    return None


def _scenario_shapes(run: Run, key: str):
    r = next(r for r in run.analysis.runs if r.key == key)
    return [n.skeleton for n in r.tree.shapes()]


def test_4_flawed_variant_as_specified():
    """CAVES with S dropped from the attester messages and nothing else changed."""
    found = _scenario_shapes(run_fixture("caves-flawed"), "server-d-listener")
    hits = [x for x in map(_disagreement, found) if x and x[1]]
    check(
        "4a flawed variant (S dropped, kp kept)",
        bool(hits),
        f"{len(found)} shapes; d stays under the attester's fresh kp (see decisions ledger)",
    )


def test_4_precursor_disagreement():
    run = run_fixture("caves-precursor")
    without_s = _scenario_shapes(run, "server-d-listener")
    with_s = _scenario_shapes(run, "server-d-listener-with-s")
    hits = [x for x in map(_disagreement, without_s) if x and x[1]]
    ok = len(without_s) >= 1 and bool(hits) and with_s == []
    check(
        "4b kp-free variant: disagreement without S, none with S",
        ok,
        f"{len(without_s)} shape(s) without S, disagreeing client at strand {hits[0][0] if hits else '-'}, "
        f"d leaks; {len(with_s)} with S",
    )


def test_4_precursor_strand_mapping():
    fx = load_fixture("caves-precursor")
    [mapping] = [gs.skeleton for gs in fx.golden["server-d-listener"].shapes]
    [shape] = _scenario_shapes(run_fixture("caves-precursor"), "server-d-listener")
    mine = sorted(map(strand_signature, shape.strands))
    ref = sorted(map(strand_signature, mapping.strands))
    embeds = specializes(mapping, shape) is not None
    check(
        "4c kp-free variant: strand multiset equals the reference mapping",
        mine == ref and embeds,
        f"{len(mine)} strands vs {len(ref)}; reference maplets {'embed' if embeds else 'do not embed'}",
    )


# ---------------------------------------------------------------------------
# 5. Derivability oracle

_NAMES = [Var(n, NAME) for n in ("a", "b")]
_POOLS = {
    NAME: _NAMES,
    TEXT: [Var(n, TEXT) for n in ("t", "u")],
    DATA: [Var(n, DATA) for n in ("n", "m")],
    SKEY: [Var("k", SKEY)],
    AKEY: [Var("i", AKEY)],
}


def _rand_key(rng):
    a = rng.choice(_NAMES)
    i = _POOLS[AKEY][0]
    return rng.choice([_POOLS[SKEY][0], Ltk(a, rng.choice(_NAMES)), Pubk(a), Privk(a), i, Invk(i)])


def _rand_atom(rng):
    kind = rng.randrange(5)
    if kind == 4:
        return _rand_key(rng)
    return rng.choice(_POOLS[(NAME, TEXT, DATA, NAME)[kind]])


def _rand_term(rng, depth, mesg=False):
    if depth == 0 or rng.random() < 0.3:
        roll = rng.random()
        if roll < 0.1:
            return Tag(rng.choice("xy"))
        if mesg and roll < 0.2:
            return Var("x", MESG)
        return _rand_atom(rng)
    if rng.random() < 0.5:
        return Cat(_rand_term(rng, depth - 1, mesg), _rand_term(rng, depth - 1, mesg))
    return Enc(_rand_term(rng, depth - 1, mesg), _rand_key(rng))


def _rand_context(rng):
    avail = [_rand_term(rng, 4) for _ in range(rng.randint(0, 8))]
    # Goals are often pieces of what is available, so both answers occur.
    pieces = [s for t in avail for s in subterms(t)]
    goal = rng.choice(pieces) if pieces and rng.random() < 0.6 else _rand_term(rng, 4)
    atoms = sorted({s for t in avail + [goal] for s in subterms(t) if is_atom(s)}, key=repr)
    non_orig = {x for x in atoms if rng.random() < 0.35}
    uniq = {x: rng.choice([None, (0, 0)]) for x in atoms if x not in non_orig and rng.random() < 0.3}
    return DerivationContext(frozenset(avail), frozenset(non_orig), uniq), goal


def test_5_derivability_oracle():
    rng = random.Random(20241016)
    start = time.perf_counter()
    total, positives, disagreements = 10_000, 0, []
    for _ in range(total):
        ctx, goal = _rand_context(rng)
        mine = derivable(ctx, goal)
        positives += mine
        if mine != closure_derivable(ctx, goal):
            disagreements.append((ctx, goal))
    secs = time.perf_counter() - start
    check(
        "5 derivability oracle",
        not disagreements and secs < 300,
        f"{total} contexts, {positives} derivable, {len(disagreements)} disagreements, {secs:.1f}s",
    )


# ---------------------------------------------------------------------------
# 6. Skeleton invariants


def test_6_skeleton_invariants():
    problems, seen, shapes = [], 0, 0
    for name in FIXTURES:
        run = run_fixture(name)
        for s in run.observed:
            seen += 1
            bad = validate(s)
            if bad:
                problems.append(f"{name}: {bad[0]}")
        for r in run.analysis.runs:
            found = [n.skeleton for n in r.tree.shapes()]
            for node in r.tree.nodes.values():
                if validate(node.skeleton):
                    problems.append(f"{name}/{r.key}: tree node {node.label} invalid")
            for s in found:
                shapes += 1
                if unrealized_nodes(s):
                    problems.append(f"{name}/{r.key}: shape has unrealized nodes")
                for other in found:
                    if other is not s and specializes(other, s, len(r.problem.strands)) is not None:
                        problems.append(f"{name}/{r.key}: shape specialized by a sibling")
    check(
        "6 skeleton invariants",
        not problems and seen > 0,
        "; ".join(problems[:3]) or f"{seen} constructed skeletons valid; {shapes} shapes realized and minimal",
    )


# ---------------------------------------------------------------------------
# 7. Parser round-trip

_SYM_START = "abcdefghijklmnopqrstuvwxyz*/<=>!?_"
_SYM_REST = _SYM_START + "+-0123456789.#:"


def _rand_sexpr(rng, depth=4):
    roll = rng.random()
    if depth == 0 or roll < 0.4:
        kind = rng.randrange(3)
        if kind == 0:
            return Symbol(rng.choice(_SYM_START) + "".join(rng.choice(_SYM_REST) for _ in range(rng.randrange(6))))
        if kind == 1:
            return String("".join(chr(rng.randrange(32, 0x2FF)) for _ in range(rng.randrange(10))))
        return Integer(rng.randint(-10**6, 10**6))
    return SList(tuple(_rand_sexpr(rng, depth - 1) for _ in range(rng.randrange(6))))


def test_7_parser_round_trip():
    problems, files = [], 0
    root = Path(load_fixture("caves").path).parent
    for path in sorted(root.rglob("*")):
        if path.suffix not in {".scm", ".out", ".facts"}:
            continue
        files += 1
        forms = read_all(path.read_text())
        printed = write_all(forms)
        if read_all(printed) != forms:
            problems.append(f"{path.name}: structure changed")
        if write_all(read_all(printed)) != printed:
            problems.append(f"{path.name}: not a textual fixpoint")
    rng = random.Random(7)
    for _ in range(1000):
        e = _rand_sexpr(rng)
        text = write(e)
        if read_all(text) != [e] or write(read_all(text)[0]) != text:
            problems.append(f"random tree {text[:40]!r}")
    check("7 parser round-trip", not problems, "; ".join(problems[:3]) or f"{files} fixture files, 1000 random trees")


# ---------------------------------------------------------------------------
# 8. Term algebra


def _rand_subst(rng, vs):
    out = {}
    for v in vs:
        if rng.random() < 0.3:
            continue
        if v.sort == MESG:
            out[v] = _rand_term(rng, 2)
        elif v.sort == AKEY:
            out[v] = rng.choice([Pubk(_NAMES[0]), Privk(_NAMES[1]), v, Invk(v)])
        elif v.sort == SKEY:
            out[v] = rng.choice(_POOLS[SKEY] + [Ltk(*_NAMES)])
        else:
            out[v] = rng.choice(_POOLS[v.sort])
    return out


def _rename(t, suffix):
    return substitute({v: Var(v.name + suffix, v.sort) for v in variables(t)}, t)


def _wrap_invk(rng, t):
    """Scatter redundant Invk wrappers over asymmetric key positions."""
    if isinstance(t, Cat):
        return Cat(_wrap_invk(rng, t.left), _wrap_invk(rng, t.right))
    if isinstance(t, Enc):
        key = t.key
        if isinstance(key, (Pubk, Privk, Invk)) or (isinstance(key, Var) and key.sort == AKEY):
            for _ in range(rng.randrange(4)):
                key = Invk(key)
        return Enc(_wrap_invk(rng, t.body), key)
    return t


def test_8_term_algebra():
    problems = []
    a, n = _NAMES[0], _POOLS[DATA][0]
    space = small_terms([n, a, Tag("z")], [_POOLS[SKEY][0]], 2)
    for s, t in product(space, repeat=2):
        if carries(s, t) != (t in carried_set(s)):
            problems.append(f"carries {s!r} {t!r}")
    for s in space:
        if not carries(s, s):
            problems.append(f"reflexivity {s!r}")
        for mid in carried_set(s):
            for low in carried_set(mid):
                if not carries(s, low):
                    problems.append(f"transitivity {s!r}")
    inv_rng = random.Random(3)
    seeds = [Pubk(a), Privk(a), _POOLS[AKEY][0]]
    for seed in seeds:
        raw = seed
        for _ in range(5):
            raw = Invk(raw)
            if {reduce_randomly(raw, inv_rng) for _ in range(6)} != {normalize(raw)} or not is_normal(normalize(raw)):
                problems.append(f"confluence {raw!r}")
    exhaustive = len(problems) == 0
    rng = random.Random(11)
    rounds = 2000
    for _ in range(rounds):
        p = _rand_term(rng, 5, mesg=True)
        if not carries(p, p):
            problems.append(f"reflexivity {p!r}")
        target = normalize(substitute(_rand_subst(rng, sorted(variables(p), key=repr)), p))
        m = match(p, target)
        if m is None or normalize(substitute(m, p)) != target:
            problems.append(f"match {p!r}")
        general, inst = _rename(p, "'"), _rename(p, "''")
        other = normalize(substitute(_rand_subst(rng, sorted(variables(inst), key=repr)), inst))
        u = unify(general, other)
        if u is None or substitute(u, general) != substitute(u, other):
            problems.append(f"unify {p!r}")
        q = _rand_term(rng, 5, mesg=True)
        u2 = unify(p, q)
        if u2 is not None and substitute(u2, p) != substitute(u2, q):
            problems.append(f"unify soundness {p!r} {q!r}")
        raw = _wrap_invk(rng, p)
        if not (reduce_randomly(raw, rng) == normalize(raw) == invk_normal(raw)):
            problems.append(f"confluence {raw!r}")
    check(
        "8 term algebra",
        not problems,
        "; ".join(problems[:3])
        or f"exhaustive over {len(space)} terms {'ok' if exhaustive else 'FAILED'}; {rounds} random depth-5 rounds",
    )


# ---------------------------------------------------------------------------


if __name__ == "__main__":
    # pytest imports this file afresh; the conftest prints that copy's RESULTS.
    sys.exit(pytest.main([__file__, "-q", "--no-header", "--tb=no"]))
