"""Command-line front end: analyze, shapes, diff, graph, explain."""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .adversary import explain_node, unrealized_nodes
from .annotations import annotations_to_sexpr, discharge, obligations_to_sexpr, shape_annotations, shape_obligations
from .corpus import CorpusError, InputFile, parse_input
from .protocol import ProtocolError, parse_protocol
from .sexpr import Integer, ParseError, SExpr, SList, String, read_all, slist, sym, write
from .skeleton import (
    Skeleton,
    SkeletonError,
    strand_signature,
    find_isomorphism,
    parse_problem,
    skeleton_to_sexpr,
    specializes,
)
from .solver import SearchTree, SolverConfig, TreeNode, search, select_test
from .terms import TermError

OK, CHECK_FAILED, INPUT_ERROR, INCOMPLETE = 0, 1, 2, 3


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# Analysis


@dataclass
class ScenarioRun:
    key: str
    problem: Skeleton
    tree: SearchTree
    offset: int  # label of the tree root in the output stream

    def label(self, node: TreeNode) -> int:
        return self.offset + node.label


@dataclass
class Analysis:
    source: InputFile
    config: SolverConfig
    runs: list[ScenarioRun] = field(default_factory=list)

    @property
    def incomplete(self) -> bool:
        return any(r.tree.incomplete for r in self.runs)


def read_input(path: str) -> InputFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return parse_input(text)
    except CorpusError as exc:
        raise InputError(f"{path}: {exc}") from exc


def solver_config(src: InputFile, args: argparse.Namespace) -> SolverConfig:
    cfg = SolverConfig(check_nonces_first=src.herald.check_nonces)
    if src.herald.bound is not None:
        cfg = replace(cfg, strand_bound=src.herald.bound)
    if getattr(args, "bound", None) is not None:
        cfg = replace(cfg, strand_bound=args.bound)
    if getattr(args, "no_check_nonces", False):
        cfg = replace(cfg, check_nonces_first=False)
    if getattr(args, "step_limit", None) is not None:
        cfg = replace(cfg, step_limit=args.step_limit)
    return cfg


def analyze(src: InputFile, cfg: SolverConfig, only: Optional[str] = None) -> Analysis:
    out = Analysis(src, cfg)
    offset = 0
    for sc in src.scenarios:
        if only is not None and sc.key != only:
            continue
        try:
            tree = search(sc.problem, cfg)
        except SkeletonError as exc:
            raise InputError(f"scenario {sc.key}: {exc}") from exc
        out.runs.append(ScenarioRun(sc.key, sc.problem, tree, offset))
        offset += max(tree.nodes) + 1
    return out


# ---------------------------------------------------------------------------
# Printing


def node_block(run: ScenarioRun, node: TreeNode, with_traces: bool = True) -> SList:
    skel = node.skeleton
    extra: list[SExpr] = []
    if node.operation is not None:
        extra.append(node.operation.to_sexpr())
    extra.append(slist(sym("label"), Integer(run.label(node))))
    if node.parent is not None:
        extra.append(slist(sym("parent"), Integer(run.offset + node.parent)))
    # The restatement reports what the problem itself leaves unexplained.
    unrealized = unrealized_nodes(run.problem) if node.parent is None else node.unrealized
    extra.append(slist(sym("unrealized"), *[slist(Integer(a), Integer(b)) for a, b in unrealized]))
    if node.shape:
        extra.append(slist(sym("shape")))
        anns = shape_annotations(skel)
        obs = shape_obligations(skel)
        if anns:
            extra.append(annotations_to_sexpr(anns))
        if obs:
            extra.append(obligations_to_sexpr(obs))
    elif node.cohort_size:
        extra.append(slist(sym("comment"), String(f"{node.cohort_size} in cohort - {node.fresh} not yet seen")))
    return skeleton_to_sexpr(skel, extra, with_traces)


def banner(cfg: SolverConfig) -> list[SExpr]:
    items = [f"strandspace {__version__}", "All input read", f"Strand count bounded at {cfg.strand_bound}"]
    if cfg.check_nonces_first:
        items.append("Nonces checked first")
    return [slist(sym("comment"), String(t)) for t in items]


def render(an: Analysis, tree: bool = False, shapes_only: bool = False) -> str:
    forms: list[SExpr] = list(banner(an.config))
    for f in an.source.forms:
        if isinstance(f, SList) and f.head in ("herald", "defprotocol"):
            forms.append(f)
    for run in an.runs:
        forms.append(slist(sym("comment"), String(f"Scenario {run.key}")))
        nodes = sorted(run.tree.nodes.values(), key=lambda n: n.label)
        if shapes_only:
            chosen = [n for n in nodes if n.shape]
        elif tree:
            chosen = nodes
        else:
            chosen = [nodes[0]] + [n for n in nodes[1:] if n.shape]
        forms.extend(node_block(run, n) for n in chosen)
        if not run.tree.shapes():
            forms.append(slist(sym("comment"), String("No shapes: the scenario has no realized refinement")))
        if run.tree.incomplete:
            forms.append(slist(sym("comment"), String(f"Search incomplete: step limit {an.config.step_limit} reached")))
    return "".join(write(f) + "\n" for f in forms)


def emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Reading output streams back


@dataclass
class StreamScenario:
    key: str
    blocks: list[SList]

    def shapes(self) -> list[SList]:
        return [b for b in self.blocks if _has(b, "shape") or _has(b, "mapping-only")]


def _has(block: SList, head: str) -> bool:
    return any(isinstance(c, SList) and c.head == head for c in block.items[2:])


_SCENARIO = re.compile(r"^Scenario\s+(\S+)")


def split_stream(forms: list[SExpr]) -> list[StreamScenario]:
    """Group defskeleton blocks by scenario.

    A ``Scenario`` comment opens a scenario; failing that, any block
    without a ``parent`` clause does.
    """
    out: list[StreamScenario] = []
    keyed = False
    for f in forms:
        if not isinstance(f, SList):
            continue
        if f.head == "comment" and len(f) >= 2 and isinstance(f.items[1], String):
            m = _SCENARIO.match(f.items[1].text)
            if m:
                out.append(StreamScenario(m.group(1), []))
                keyed = True
            continue
        if f.head != "defskeleton":
            continue
        if not out or (not keyed and not _has(f, "parent") and out[-1].blocks):
            out.append(StreamScenario(f"scenario-{len(out) + 1}", []))
        out[-1].blocks.append(f)
    return out


def load_stream(path: Path, protocols: Optional[dict] = None) -> tuple[list[StreamScenario], dict]:
    """Read an output file, or a directory of ``<scenario>.out`` files."""
    protocols = dict(protocols or {})
    if path.is_dir():
        scenarios = []
        for p in sorted(path.glob("*.out")):
            forms = _read_forms(p)
            _collect_protocols(forms, protocols)
            blocks = [f for f in forms if isinstance(f, SList) and f.head == "defskeleton"]
            scenarios.append(StreamScenario(p.stem, blocks))
        return scenarios, protocols
    forms = _read_forms(path)
    _collect_protocols(forms, protocols)
    return split_stream(forms), protocols


def _read_forms(path: Path) -> list[SExpr]:
    try:
        return read_all(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ParseError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _collect_protocols(forms, protocols: dict) -> None:
    for f in forms:
        if isinstance(f, SList) and f.head == "defprotocol":
            try:
                p = parse_protocol(f)
            except ProtocolError as exc:
                raise InputError(str(exc)) from exc
            protocols[p.name] = p


@dataclass
class DiffReport:
    lines: list[str] = field(default_factory=list)
    ok: bool = True

    def fail(self, msg: str) -> None:
        self.ok = False
        self.lines.append(f"FAIL {msg}")

    def note(self, msg: str) -> None:
        self.lines.append(f"ok   {msg}")


def _witness(a: Skeleton, b: Skeleton) -> str:
    """Best-effort hint at why two shapes are not isomorphic."""
    sa = sorted((s.role_name, s.height) for s in a.strands)
    sb = sorted((s.role_name, s.height) for s in b.strands)
    if sa != sb:
        return f"strands differ: {sa} vs {sb}"
    if len(a.precedes) != len(b.precedes):
        return f"ordering sizes differ: {len(a.precedes)} vs {len(b.precedes)}"
    return "same strand multiset, but no variable renaming carries one onto the other"


def diff_streams(actual: list[StreamScenario], golden: list[StreamScenario], protocols: dict) -> DiffReport:
    rep = DiffReport()
    by_key = {g.key: g for g in golden}
    if all(a.key in by_key for a in actual) and len(actual) == len(golden):
        pairs = [(a, by_key[a.key]) for a in actual]
    else:
        if len(actual) != len(golden):
            rep.fail(f"scenario count {len(actual)} vs {len(golden)}")
            return rep
        pairs = list(zip(actual, golden))
    for a, g in pairs:
        try:
            mine = [parse_problem(b, protocols) for b in a.shapes()]
            ref = [parse_problem(b, protocols) for b in g.shapes()]
        except (SkeletonError, TermError) as exc:
            rep.fail(f"{a.key}: cannot read shapes: {exc}")
            continue
        if len(mine) != len(ref):
            rep.fail(f"{a.key}: {len(mine)} shapes vs {len(ref)}")
            continue
        if any(_has(b, "mapping-only") for b in g.shapes()):
            _diff_mappings(a.key, mine, ref, rep)
            continue
        unused = list(range(len(ref)))
        bad = False
        for k, s in enumerate(mine):
            hit = next((j for j in unused if find_isomorphism(s, ref[j]) is not None), None)
            if hit is None:
                why = _witness(s, ref[unused[0]]) if unused else "nothing left to pair with"
                rep.fail(f"{a.key}: shape {k} has no isomorphic partner ({why})")
                bad = True
                break
            unused.remove(hit)
        if not bad:
            rep.note(f"{a.key}: {len(mine)} shape(s) isomorphic")
    return rep


def _diff_mappings(key: str, mine: list[Skeleton], ref: list[Skeleton], rep: DiffReport) -> None:
    """Golden blocks that record only strand maplets: compare roles and embedding."""
    for k, (s, g) in enumerate(zip(mine, ref)):
        embeds = specializes(g, s) is not None
        if sorted(map(strand_signature, s.strands)) != sorted(map(strand_signature, g.strands)):
            rep.fail(f"{key}: shape {k} {_witness(s, g)}; mapping {'embeds' if embeds else 'does not embed'}")
        elif not embeds:
            rep.fail(f"{key}: shape {k} has the golden strands but the maplets do not embed")
        else:
            rep.note(f"{key}: shape {k} matches the strand mapping")


# ---------------------------------------------------------------------------
# DOT output


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def shape_dot(skel: Skeleton, name: str = "shape") -> str:
    lines = [f"digraph {_dot_id(name)} {{", "  rankdir=TB;", "  node [shape=circle, width=0.3, fixedsize=true];"]
    for i, st in enumerate(skel.strands):
        title = st.role_name
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_dot_id(f'{i}: {title}')};")
        for p in range(st.height):
            ev = st.trace[p]
            mark = "+" if ev.direction == "send" else "-"
            tip = write(ev.to_sexpr(), width=10_000)
            lines.append(f"    n{i}_{p} [label={_dot_id(mark)}, tooltip={_dot_id(tip)}];")
        for p in range(st.height - 1):
            lines.append(f'    n{i}_{p} -> n{i}_{p + 1} [color="black:black"];')
        lines.append("  }")
    for (a, b), (c, d) in sorted(skel.precedes):
        lines.append(f"  n{a}_{b} -> n{c}_{d};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_TOKEN = re.compile(
    r"""\s*(?:
        (?P<arrow>->|--)
      | (?P<punct>[{}\[\];,=:])
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<number>-?(?:\.\d+|\d+(?:\.\d*)?))
      | (?P<ident>[A-Za-z_\x80-￿][A-Za-z_0-9\x80-￿]*)
    )""",
    re.VERBOSE | re.DOTALL,
)


def dot_tokens(text: str) -> list[tuple[str, str]]:
    toks = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _DOT_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad DOT input at offset {pos}")
        kind = m.lastgroup
        toks.append((kind, m.group(kind)))
        pos = m.end()
    return toks


_DOT_KEYWORDS = {"graph", "digraph", "subgraph", "node", "edge", "strict"}


class _DotParser:
    """Recursive descent over the DOT grammar (ports omitted)."""

    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None, kind=None):
        k, v = self.peek()
        if (value is not None and v != value) or (kind is not None and k != kind) or k is None:
            raise ValueError(f"DOT: expected {value or kind}, got {v!r}")
        self.i += 1
        return v

    def is_id(self):
        k, v = self.peek()
        return k in ("string", "number") or (k == "ident" and v not in _DOT_KEYWORDS)

    def ident(self):
        if not self.is_id():
            raise ValueError(f"DOT: identifier expected, got {self.peek()[1]!r}")
        self.i += 1

    def graph(self):
        if self.peek()[1] == "strict":
            self.take("strict")
        kind = self.take(kind="ident")
        if kind not in ("graph", "digraph"):
            raise ValueError("DOT: graph or digraph expected")
        if self.is_id():
            self.ident()
        self.take("{")
        self.stmt_list()
        self.take("}")
        if self.i != len(self.toks):
            raise ValueError("DOT: trailing input")

    def stmt_list(self):
        while self.peek()[1] not in ("}", None):
            self.stmt()
            if self.peek()[1] == ";":
                self.take(";")

    def attr_list(self):
        while self.peek()[1] == "[":
            self.take("[")
            while self.peek()[1] != "]":
                self.ident()
                self.take("=")
                self.ident()
                if self.peek()[1] in (",", ";"):
                    self.i += 1
            self.take("]")

    def operand(self):
        if self.peek()[1] in ("subgraph", "{"):
            self.subgraph()
        else:
            self.ident()

    def subgraph(self):
        if self.peek()[1] == "subgraph":
            self.take("subgraph")
            if self.is_id():
                self.ident()
        self.take("{")
        self.stmt_list()
        self.take("}")

    def stmt(self):
        _, v = self.peek()
        if v in ("graph", "node", "edge"):
            self.i += 1
            self.attr_list()
            return
        nxt = self.toks[self.i + 1][1] if self.i + 1 < len(self.toks) else None
        if self.is_id() and nxt == "=":
            self.ident()
            self.take("=")
            self.ident()
            return
        self.operand()
        edge = False
        while self.peek()[0] == "arrow":
            self.i += 1
            self.operand()
            edge = True
        if edge or self.peek()[1] == "[":
            self.attr_list()


def check_dot(text: str) -> None:
    """Raise ValueError unless ``text`` is well-formed DOT."""
    _DotParser(dot_tokens(text)).graph()


# ---------------------------------------------------------------------------
# Commands


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bound", type=int, help="strand count bound (overrides the herald)")
    p.add_argument("--no-check-nonces", action="store_true", help="prefer encryption tests")
    p.add_argument("--step-limit", type=int, help="maximum skeletons to expand per scenario")
    p.add_argument("--scenario", help="analyze only this scenario key")


def cmd_analyze(args) -> int:
    src = read_input(args.input)
    cfg = solver_config(src, args)
    an = analyze(src, cfg, args.scenario)
    emit(render(an, tree=args.tree), args.output)
    return INCOMPLETE if an.incomplete else OK


def cmd_shapes(args) -> int:
    src = read_input(args.input)
    cfg = solver_config(src, args)
    an = analyze(src, cfg, args.scenario)
    if args.shape is not None:
        found = [(r, n) for r in an.runs for n in sorted(r.tree.shapes(), key=lambda n: n.label)]
        if not 0 <= args.shape < len(found):
            raise InputError(f"shape {args.shape} out of range ({len(found)} shapes)")
        run, node = found[args.shape]
        emit(write(node_block(run, node)) + "\n", args.output)
    else:
        emit(render(an, shapes_only=True), args.output)
    return INCOMPLETE if an.incomplete else OK


def cmd_diff(args) -> int:
    actual, protocols = load_stream(Path(args.actual))
    golden, protocols = load_stream(Path(args.golden), protocols)
    rep = diff_streams(actual, golden, protocols)
    sys.stdout.write("\n".join(rep.lines) + "\n")
    return OK if rep.ok else CHECK_FAILED


def _stream_shapes(path: str) -> Optional[list[Skeleton]]:
    """Shapes stored in an output stream, or None if the file is an analysis input."""
    forms = _read_forms(Path(path))
    blocks = [f for f in forms if isinstance(f, SList) and f.head == "defskeleton" and _has(f, "shape")]
    if not blocks:
        return None
    protocols: dict = {}
    _collect_protocols(forms, protocols)
    try:
        return [parse_problem(b, protocols) for b in blocks]
    except (SkeletonError, TermError) as exc:
        raise InputError(str(exc)) from exc


def cmd_graph(args) -> int:
    found = _stream_shapes(args.input)
    if found is None:
        src = read_input(args.input)
        an = analyze(src, solver_config(src, args), args.scenario)
        found = [n.skeleton for r in an.runs for n in sorted(r.tree.shapes(), key=lambda n: n.label)]
    k = args.shape or 0
    if not 0 <= k < len(found):
        raise InputError(f"shape {k} out of range ({len(found)} shapes)")
    text = shape_dot(found[k], f"shape {k}")
    check_dot(text)
    emit(text, args.output)
    return OK


def cmd_explain(args) -> int:
    src = read_input(args.input)
    an = analyze(src, solver_config(src, args), args.scenario)
    lines = []
    for run in an.runs:
        target = args.label - run.offset if args.label is not None else 0
        node = run.tree.nodes.get(target)
        if node is None:
            continue
        lines.append(f"scenario {run.key}, label {run.label(node)}")
        for n in node.unrealized:
            lines.extend(explain_node(node.skeleton, n))
        if node.unrealized:
            test = select_test(node.skeleton, node.unrealized, an.config)
            if test is None:
                lines.append("no authentication test applies: the skeleton is dead")
            else:
                esc = " ".join(repr(e) for e in test.escape) or "nothing"
                lines.append(f"{test.kind} on {test.critical!r} at {test.node}, escape set {esc}")
        elif node.shape:
            for ob in shape_obligations(node.skeleton):
                lines.append(f"obligation at {ob.node}: {discharge(ob)}")
    if not lines:
        raise InputError("no such scenario or label")
    emit("\n".join(lines) + "\n", args.output)
    return INCOMPLETE if an.incomplete else OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strandspace", description="Strand space protocol analyzer.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the analysis and print restatements and shapes")
    p.add_argument("input")
    _add_search_flags(p)
    p.add_argument("--tree", action="store_true", help="print every skeleton in the search tree")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("shapes", help="print only the shapes")
    p.add_argument("input")
    _add_search_flags(p)
    p.add_argument("--shape", type=int, help="print only the K-th shape (from 0)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_shapes)

    p = sub.add_parser("diff", help="compare shapes of two output streams up to isomorphism")
    p.add_argument("actual")
    p.add_argument("golden", help="output file, or a directory of <scenario>.out files")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("graph", help="emit a DOT strand diagram of one shape")
    p.add_argument("input", help="analysis input or output stream")
    _add_search_flags(p)
    p.add_argument("--shape", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("explain", help="show why a skeleton's receptions are (un)realized")
    p.add_argument("input")
    _add_search_flags(p)
    p.add_argument("--label", type=int, help="output label of the skeleton (default: each restatement)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_explain)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"strandspace: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
