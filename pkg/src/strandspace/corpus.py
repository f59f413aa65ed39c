"""Bundled fixtures: the CAVES protocol, its variants, golden shapes and theories."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .adversary import unrealized_nodes
from .annotations import Formula, HornRule, load_theory, parse_formula
from .protocol import Herald, Protocol, ProtocolError, parse_herald, parse_protocol
from .sexpr import ParseError, SExpr, SList, String, read_all
from .skeleton import Skeleton, SkeletonError, parse_problem, validate
from .terms import Term, TermError, Var, parse_decls, parse_term

FIXTURE_ROOT = Path(__file__).parent / "fixtures"
FIXTURES = ("caves", "caves-flawed", "caves-precursor")

Node = tuple[int, int]


class CorpusError(Exception):
    pass


@dataclass
class Scenario:
    key: str
    form: SList
    problem: Skeleton


@dataclass
class InputFile:
    forms: list[SExpr]
    herald: Herald
    protocols: dict[str, Protocol]
    scenarios: list[Scenario]

    def scenario(self, key: str) -> Scenario:
        for sc in self.scenarios:
            if sc.key == key:
                return sc
        raise KeyError(key)


_SCENARIO_COMMENT = re.compile(r"^Scenario\s+(\S+)")


def parse_input(text: str) -> InputFile:
    """Parse an input stream of herald, defprotocol and defskeleton forms.

    A ``(comment "Scenario <key>")`` right before a defskeleton names it;
    unnamed problems get ``scenario-<n>``.
    """
    try:
        forms = read_all(text)
    except ParseError as exc:
        raise CorpusError(str(exc)) from exc
    herald = Herald()
    protocols: dict[str, Protocol] = {}
    scenarios: list[Scenario] = []
    pending_key: Optional[str] = None
    try:
        for f in forms:
            if not isinstance(f, SList):
                raise CorpusError(f"unexpected top-level atom {f}")
            if f.head == "herald":
                herald = parse_herald(f)
            elif f.head == "comment":
                if len(f) >= 2 and isinstance(f.items[1], String):
                    m = _SCENARIO_COMMENT.match(f.items[1].text)
                    if m:
                        pending_key = m.group(1)
            elif f.head == "defprotocol":
                p = parse_protocol(f)
                protocols[p.name] = p
            elif f.head == "defskeleton":
                key = pending_key or f"scenario-{len(scenarios) + 1}"
                pending_key = None
                scenarios.append(Scenario(key, f, parse_problem(f, protocols)))
            else:
                raise CorpusError(f"unknown top-level form {f.head}")
    except (ProtocolError, SkeletonError, TermError) as exc:
        raise CorpusError(str(exc)) from exc
    return InputFile(forms, herald, protocols, scenarios)


@dataclass
class GoldenEntry:
    node: Node
    principal: Term
    formula: Formula


@dataclass
class GoldenShape:
    form: SList
    skeleton: Skeleton
    mapping_only: bool
    annotations: list[GoldenEntry] = field(default_factory=list)
    obligations: list[GoldenEntry] = field(default_factory=list)


@dataclass
class Golden:
    scenario: str
    shapes: list[GoldenShape]
    # Trailing non-shape blocks, e.g. the last unrealized skeleton of a
    # shapeless run.
    others: list[SList]

    @property
    def count(self) -> int:
        return len(self.shapes)


def _clause(form: SList, head: str) -> Optional[SList]:
    for c in form.items[2:]:
        if isinstance(c, SList) and c.head == head:
            return c
    return None


def _entries(clause: Optional[SList], scope: dict[str, Var]) -> list[GoldenEntry]:
    if clause is None:
        return []
    out = []
    for e in clause.items[1:]:
        if not isinstance(e, SList) or len(e) != 3:
            raise CorpusError("malformed annotation entry")
        node = tuple(int(x.value) for x in e.items[0].items)
        out.append(GoldenEntry(node, parse_term(e.items[1], scope), parse_formula(e.items[2], scope)))
    return out


def parse_golden(scenario: str, text: str, protocols: dict[str, Protocol]) -> Golden:
    shapes: list[GoldenShape] = []
    others: list[SList] = []
    for f in read_all(text):
        if not isinstance(f, SList) or f.head != "defskeleton":
            continue
        mapping_only = _clause(f, "mapping-only") is not None
        if _clause(f, "shape") is None and not mapping_only:
            others.append(f)
            continue
        try:
            skel = parse_problem(f, protocols)
            vars_clause = _clause(f, "vars")
            scope = parse_decls(vars_clause.items[1:]) if vars_clause is not None else {}
            shapes.append(
                GoldenShape(
                    f,
                    skel,
                    mapping_only,
                    _entries(_clause(f, "annotations"), scope),
                    _entries(_clause(f, "obligations"), scope),
                )
            )
        except (SkeletonError, TermError) as exc:
            raise CorpusError(f"{scenario}: bad golden block: {exc}") from exc
    return Golden(scenario, shapes, others)


def check_golden(g: Golden) -> list[str]:
    """Problems with a golden file: each full shape must validate and be realized."""
    problems = []
    for k, gs in enumerate(g.shapes):
        if gs.mapping_only:
            continue
        for p in validate(gs.skeleton):
            problems.append(f"{g.scenario} shape {k}: {p}")
        left = unrealized_nodes(gs.skeleton)
        if left:
            problems.append(f"{g.scenario} shape {k}: unrealized {left}")
    return problems


@dataclass
class Fixture:
    name: str
    path: Path
    source: InputFile
    golden: dict[str, Golden]
    restatements: dict[str, SList]
    theories: dict[str, tuple[list[HornRule], set[Formula]]]
    notes: str

    @property
    def scenarios(self) -> list[Scenario]:
        return self.source.scenarios

    def expected_counts(self) -> dict[str, int]:
        return {k: g.count for k, g in self.golden.items()}


def load_fixture(name: str, check: bool = True) -> Fixture:
    if name not in FIXTURES:
        raise CorpusError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")
    root = FIXTURE_ROOT / name
    source = parse_input((root / "input.scm").read_text())
    golden = {}
    for p in sorted((root / "golden").glob("*.out")):
        golden[p.stem] = parse_golden(p.stem, p.read_text(), source.protocols)
    restatements = {}
    rdir = root / "restatements"
    if rdir.is_dir():
        for p in sorted(rdir.glob("*.out")):
            blocks = [f for f in read_all(p.read_text()) if isinstance(f, SList) and f.head == "defskeleton"]
            if blocks:
                restatements[p.stem] = blocks[0]
    theories = {}
    tdir = root / "theory"
    if tdir.is_dir():
        for p in sorted(tdir.glob("*.facts")):
            theories[p.stem] = load_theory(read_all(p.read_text()))
    notes_path = root / "NOTES.txt"
    notes = notes_path.read_text() if notes_path.exists() else ""
    fx = Fixture(name, root, source, golden, restatements, theories, notes)
    if check:
        problems = [p for g in golden.values() for p in check_golden(g)]
        if problems:
            raise CorpusError("; ".join(problems))
    return fx


def appendix_text() -> str:
    """The complete reference output stream for the CAVES fixture."""
    return (FIXTURE_ROOT / "caves" / "appendix.out").read_text()


def _rg_key(node: Node, principal: Term, f: Formula) -> tuple:
    from .annotations import Implies

    if isinstance(f, Implies):
        ants = tuple(sorted(f.antecedents, key=repr))
        return (node, principal, "implies", ants, f.consequent)
    return (node, principal, f)


def compare_rely_guarantee(actual: Skeleton, gs: GoldenShape) -> list[str]:
    """Differences between computed annotations/obligations and a golden block.

    Nodes and variables are carried over by an isomorphism from ``actual``
    onto the golden skeleton.  Antecedents compare as multisets, since a
    strand renumbering can reorder them.
    """
    from .annotations import shape_annotations, shape_obligations, subst_formula
    from .skeleton import find_isomorphism
    from .terms import substitute

    iso = find_isomorphism(actual, gs.skeleton)
    if iso is None:
        return ["computed shape is not isomorphic to the golden shape"]
    perm, fwd = iso

    def carry(node, principal, f):
        return _rg_key((perm[node[0]], node[1]), substitute(fwd, principal), subst_formula(fwd, f))

    out = []
    for what, mine, ref in (
        ("annotation", shape_annotations(actual), gs.annotations),
        ("obligation", shape_obligations(actual), gs.obligations),
    ):
        got = sorted((carry(a.node, a.principal, a.formula) for a in mine), key=repr)
        want = sorted((_rg_key(e.node, e.principal, e.formula) for e in ref), key=repr)
        for k in got:
            if k not in want:
                out.append(f"unexpected {what} at {k[0]}")
        for k in want:
            if k not in got:
                out.append(f"missing {what} at {k[0]}")
    return out


def _ann(role):
    if role.annotations is None:
        return None
    principal, table = role.annotations
    return principal, sorted(table.items())


def role_differences(p: Protocol, q: Protocol) -> list[tuple[str, str]]:
    """Where two protocols differ, as (role, part) pairs; parts are
    ``vars``, ``event <i>``, ``length``, ``non-orig``, ``uniq-orig`` and ``annotations``.

    Variables are compared by name and sort, so the two protocols must
    use the same spelling for shared parameters.
    """
    out: list[tuple[str, str]] = []
    names = [r.name for r in p.roles] + [r.name for r in q.roles if r.name not in {x.name for x in p.roles}]
    for name in names:
        try:
            a, b = p.role(name), q.role(name)
        except ProtocolError:
            out.append((name, "missing"))
            continue
        if set(a.variables) != set(b.variables):
            out.append((name, "vars"))
        if a.length != b.length:
            out.append((name, "length"))
        for i, (x, y) in enumerate(zip(a.trace, b.trace)):
            if x != y:
                out.append((name, f"event {i}"))
        if set(a.non_orig) != set(b.non_orig):
            out.append((name, "non-orig"))
        if set(a.uniq_orig) != set(b.uniq_orig):
            out.append((name, "uniq-orig"))
        if _ann(a) != _ann(b):
            out.append((name, "annotations"))
    return out
