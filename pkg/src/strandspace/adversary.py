"""Dolev-Yao derivability and realization checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .terms import MESG, Cat, Enc, Tag, Term, Var, inverse_key, is_atom

Node = tuple[int, int]


@dataclass(frozen=True)
class DerivationContext:
    available: frozenset[Term]
    non_orig: frozenset[Term] = frozenset()
    # uniq atom -> node where it originates, or None when it originates nowhere
    uniq_constraints: Mapping[Term, Optional[Node]] = field(default_factory=dict)
    target_node: Optional[Node] = None

    def creatable(self, t: Term) -> bool:
        """Can the adversary emit ``t`` from nothing?"""
        if isinstance(t, Tag):
            return True
        if isinstance(t, Var) and t.sort == MESG:
            return True
        if not is_atom(t):
            return False
        if t in self.non_orig:
            return False
        return self.uniq_constraints.get(t) is None


class Knowledge:
    """The adversary's decomposed view of a context."""

    def __init__(self, ctx: DerivationContext):
        self.ctx = ctx
        self.known: set[Term] = set()
        self.sealed: set[Enc] = set()  # encryptions it holds but cannot open (yet)
        self._memo: dict[Term, bool] = {}
        self.log: list[str] = []
        self._absorb(ctx.available)

    def _absorb(self, terms: Iterable[Term]) -> None:
        pending = list(terms)
        while True:
            while pending:
                t = pending.pop()
                if t in self.known:
                    continue
                self.known.add(t)
                self._memo.clear()
                if isinstance(t, Cat):
                    pending.extend((t.left, t.right))
                elif isinstance(t, Enc):
                    self.sealed.add(t)
            opened = [e for e in self.sealed if self.synth(inverse_key(e.key))]
            if not opened:
                return
            for e in opened:
                self.sealed.discard(e)
                self.log.append(f"decrypt {e!r} with {inverse_key(e.key)!r}")
                pending.append(e.body)

    def synth(self, t: Term) -> bool:
        hit = self._memo.get(t)
        if hit is not None:
            return hit
        if t in self.known or self.ctx.creatable(t):
            ok = True
        elif isinstance(t, Cat):
            ok = self.synth(t.left) and self.synth(t.right)
        elif isinstance(t, Enc):
            ok = self.synth(t.key) and self.synth(t.body)
        else:
            ok = False
        self._memo[t] = ok
        return ok

    def explain(self, t: Term, depth: int = 0) -> list[str]:
        pad = "  " * depth
        if t in self.known:
            return [f"{pad}{t!r}: available"]
        if self.ctx.creatable(t):
            return [f"{pad}{t!r}: adversary creates it"]
        if isinstance(t, (Cat, Enc)) and self.synth(t):
            parts = (t.left, t.right) if isinstance(t, Cat) else (t.body, t.key)
            lines = [f"{pad}{t!r}: built from parts"]
            for p in parts:
                lines.extend(self.explain(p, depth + 1))
            return lines
        if isinstance(t, (Cat, Enc)):
            parts = (t.left, t.right) if isinstance(t, Cat) else (t.body, t.key)
            lines = [f"{pad}{t!r}: NOT derivable"]
            for p in parts:
                if not self.synth(p):
                    lines.extend(self.explain(p, depth + 1))
            return lines
        return [f"{pad}{t!r}: NOT derivable"]


def derivable(ctx: DerivationContext, goal: Term) -> bool:
    return Knowledge(ctx).synth(goal)


def node_context(skel, n: Node) -> DerivationContext:
    avail = frozenset(
        skel.event(m).message for m in skel.before[n] if skel.event(m).direction == "send"
    )
    uniq = {u: (origins[0] if origins else None) for u, origins in skel.origination.items()}
    return DerivationContext(avail, skel.non_orig, uniq, n)


def unrealized_nodes(skel) -> list[Node]:
    out = []
    for n in skel.nodes():
        ev = skel.event(n)
        if ev.direction != "recv":
            continue
        if not derivable(node_context(skel, n), ev.message):
            out.append(n)
    return out


def explain_node(skel, n: Node) -> list[str]:
    k = Knowledge(node_context(skel, n))
    lines = [f"node {n}: {'realized' if k.synth(skel.event(n).message) else 'unrealized'}"]
    lines += [f"  {entry}" for entry in k.log]
    lines += k.explain(skel.event(n).message, 1)
    return lines
