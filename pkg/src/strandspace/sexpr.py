"""Reader and pretty-printer for the S-expression dialect used by inputs and outputs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

# Characters that would start a reader macro in other Lisps; not part of this dialect.
_ILLEGAL = set("'`,|[]{}\\")
_INT_RE = re.compile(r"[+-]?[0-9]+\Z")


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Symbol:
    text: str
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class String:
    text: str
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Integer:
    value: int
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SList:
    items: tuple["SExpr", ...] = ()
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def __iter__(self) -> Iterator["SExpr"]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    @property
    def head(self) -> str | None:
        """Text of the leading symbol, if any."""
        if self.items and isinstance(self.items[0], Symbol):
            return self.items[0].text
        return None


SExpr = Union[Symbol, String, Integer, SList]


def sym(text: str) -> Symbol:
    return Symbol(text)


def slist(*items: SExpr) -> SList:
    return SList(tuple(items))


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.i = 0
        self.line = 1
        self.col = 1

    def _advance(self) -> str:
        ch = self.text[self.i]
        self.i += 1
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1
        return ch

    def _peek(self) -> str | None:
        return self.text[self.i] if self.i < len(self.text) else None

    def _skip(self) -> None:
        while True:
            ch = self._peek()
            if ch is None:
                return
            if ch == ";":
                while self._peek() not in (None, "\n"):
                    self._advance()
            elif ch.isspace():
                self._advance()
            else:
                return

    def read_all(self) -> list[SExpr]:
        forms = []
        while True:
            self._skip()
            if self._peek() is None:
                return forms
            forms.append(self._read())

    def _read(self) -> SExpr:
        start = (self.line, self.col)
        ch = self._peek()
        if ch == "(":
            self._advance()
            items = []
            while True:
                self._skip()
                nxt = self._peek()
                if nxt is None:
                    raise ParseError("unbalanced parenthesis: list never closed", *start)
                if nxt == ")":
                    self._advance()
                    return SList(tuple(items), start)
                items.append(self._read())
        if ch == ")":
            raise ParseError("unbalanced parenthesis: unexpected ')'", *start)
        if ch == '"':
            return self._read_string(start)
        return self._read_atom(start)

    def _read_string(self, start: tuple[int, int]) -> String:
        self._advance()
        out = []
        while True:
            ch = self._peek()
            if ch is None:
                raise ParseError("unterminated string", *start)
            self._advance()
            if ch == '"':
                return String("".join(out), start)
            if ch == "\\":
                esc = self._peek()
                if esc is None:
                    raise ParseError("unterminated string", *start)
                self._advance()
                out.append(esc)
            else:
                out.append(ch)

    def _read_atom(self, start: tuple[int, int]) -> SExpr:
        out = []
        while True:
            ch = self._peek()
            if ch is None or ch.isspace() or ch in '()";':
                break
            if ch in _ILLEGAL or not ch.isprintable():
                raise ParseError(f"illegal character {ch!r}", self.line, self.col)
            out.append(self._advance())
        token = "".join(out)
        if _INT_RE.match(token):
            return Integer(int(token), start)
        return Symbol(token, start)


def read_all(text: str) -> list[SExpr]:
    """Read every top-level form in ``text``."""
    return _Reader(text).read_all()


def read_one(text: str) -> SExpr:
    forms = read_all(text)
    if len(forms) != 1:
        raise ParseError(f"expected one form, found {len(forms)}", 1, 1)
    return forms[0]


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def flat(expr: SExpr) -> str:
    """Single-line rendering."""
    if isinstance(expr, Symbol):
        return expr.text
    if isinstance(expr, String):
        return _quote(expr.text)
    if isinstance(expr, Integer):
        return str(expr.value)
    return "(" + " ".join(flat(e) for e in expr.items) + ")"


def write(expr: SExpr, width: int = 72) -> str:
    """Render ``expr``, filling lines up to ``width`` columns.

    Children are packed onto the current line while they fit; a list child
    that does not fit starts a new line indented two columns past its parent.
    """
    if width < 20:
        raise ValueError("width must be at least 20")
    out: list[str] = []
    _write(expr, 0, 0, width, out)
    return "".join(out)


def _write(expr: SExpr, indent: int, col: int, width: int, out: list[str]) -> int:
    text = flat(expr)
    if not isinstance(expr, SList) or col + len(text) <= width or not expr.items:
        out.append(text)
        return col + len(text)
    out.append("(")
    col += 1
    inner = indent + 2
    for k, child in enumerate(expr.items):
        ctext = flat(child)
        if k == 0:
            col = _write(child, inner, col, width, out)
            continue
        if col + 1 + len(ctext) <= width:
            out.append(" " + ctext)
            col += 1 + len(ctext)
        else:
            out.append("\n" + " " * inner)
            col = _write(child, inner, inner, width, out)
    out.append(")")
    return col + 1


def write_all(forms: list[SExpr], width: int = 72) -> str:
    return "\n".join(write(f, width) for f in forms) + ("\n" if forms else "")
