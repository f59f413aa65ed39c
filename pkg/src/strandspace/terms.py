"""Order-sorted message algebra: terms, substitution, matching, unification, carries."""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Optional

from .sexpr import Integer, SExpr, SList, String, Symbol, slist, sym

NAME, TEXT, DATA, SKEY, AKEY, MESG = "name", "text", "data", "skey", "akey", "mesg"
BASE_SORTS = (NAME, TEXT, DATA, SKEY, AKEY)
SORTS = BASE_SORTS + (MESG,)


class TermError(Exception):
    pass


class Term:
    """Base class. Subclasses are immutable and hash-consed by value."""

    __slots__ = ("_hash",)

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __hash__(self):
        return self._hash

    def __repr__(self):
        from .sexpr import flat

        return flat(term_to_sexpr(self))

    def _key(self):
        raise NotImplementedError

    def __setattr__(self, name, value):
        raise AttributeError("terms are immutable")


def _init(obj, **fields):
    for k, v in fields.items():
        object.__setattr__(obj, k, v)
    object.__setattr__(obj, "_hash", hash((type(obj).__name__,) + tuple(fields.values())))


class Var(Term):
    __slots__ = ("name", "sort")

    def __init__(self, name: str, sort: str):
        if sort not in SORTS:
            raise TermError(f"unknown sort {sort}")
        _init(self, name=name, sort=sort)

    def _key(self):
        return (self.name, self.sort)


class Tag(Term):
    __slots__ = ("text",)

    def __init__(self, text: str):
        _init(self, text=text)

    def _key(self):
        return (self.text,)


class Pubk(Term):
    __slots__ = ("arg",)

    def __init__(self, arg: Term):
        _init(self, arg=arg)

    def _key(self):
        return (self.arg,)


class Privk(Term):
    __slots__ = ("arg",)

    def __init__(self, arg: Term):
        _init(self, arg=arg)

    def _key(self):
        return (self.arg,)


class Invk(Term):
    """Inverse of an akey variable. Build through ``invk`` to stay normal."""

    __slots__ = ("arg",)

    def __init__(self, arg: Term):
        _init(self, arg=arg)

    def _key(self):
        return (self.arg,)


class Ltk(Term):
    __slots__ = ("left", "right")

    def __init__(self, left: Term, right: Term):
        _init(self, left=left, right=right)

    def _key(self):
        return (self.left, self.right)


class Enc(Term):
    __slots__ = ("body", "key")

    def __init__(self, body: Term, key: Term):
        _init(self, body=body, key=key)

    def _key(self):
        return (self.body, self.key)


class Cat(Term):
    __slots__ = ("left", "right")

    def __init__(self, left: Term, right: Term):
        _init(self, left=left, right=right)

    def _key(self):
        return (self.left, self.right)


def invk(k: Term) -> Term:
    """Normalizing inverse-key constructor."""
    if isinstance(k, Invk):
        return k.arg
    if isinstance(k, Pubk):
        return Privk(k.arg)
    if isinstance(k, Privk):
        return Pubk(k.arg)
    return Invk(k)


def cat(*parts: Term) -> Term:
    """Right-associated concatenation."""
    if not parts:
        raise TermError("empty cat")
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Cat(p, out)
    return out


def enc(*parts: Term) -> Term:
    """``enc(t1, ..., tn, key)``: the last argument is the key."""
    if len(parts) < 2:
        raise TermError("enc needs a body and a key")
    return Enc(cat(*parts[:-1]), parts[-1])


# ---------------------------------------------------------------------------
# Sorts and structure


def sort_of(t: Term) -> str:
    if isinstance(t, Var):
        return t.sort
    if isinstance(t, (Pubk, Privk, Invk)):
        return AKEY
    if isinstance(t, Ltk):
        return SKEY
    return MESG


def is_atom(t: Term) -> bool:
    if isinstance(t, Var):
        return t.sort != MESG
    return isinstance(t, (Pubk, Privk, Invk, Ltk))


def inverse_key(k: Term) -> Term:
    """Key needed to open an encryption made with ``k``."""
    return invk(k) if sort_of(k) == AKEY else k


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, (Enc,)):
        return (t.body, t.key)
    if isinstance(t, (Cat, Ltk)):
        return (t.left, t.right)
    if isinstance(t, (Pubk, Privk, Invk)):
        return (t.arg,)
    return ()


def variables(t: Term) -> set[Var]:
    out: set[Var] = set()
    _vars(t, out)
    return out


def _vars(t: Term, out: set) -> None:
    if isinstance(t, Var):
        out.add(t)
    else:
        for c in children(t):
            _vars(c, out)


def occurs(v: Var, t: Term) -> bool:
    if t is v or t == v:
        return True
    return any(occurs(v, c) for c in children(t))


def subterms(t: Term) -> Iterator[Term]:
    yield t
    for c in children(t):
        yield from subterms(c)


def carried_subterms(t: Term) -> Iterator[Term]:
    """Every term ``t`` carries, outermost first."""
    yield t
    if isinstance(t, Enc):
        yield from carried_subterms(t.body)
    elif isinstance(t, Cat):
        yield from carried_subterms(t.left)
        yield from carried_subterms(t.right)


def carries(container: Term, candidate: Term) -> bool:
    if container == candidate:
        return True
    if isinstance(container, Enc):
        return carries(container.body, candidate)
    if isinstance(container, Cat):
        return carries(container.left, candidate) or carries(container.right, candidate)
    return False


def carried_outside(t: Term, c: Term, escape: frozenset | set) -> bool:
    """Does ``t`` carry ``c`` along some path that avoids every member of ``escape``?"""
    if t in escape:
        return False
    if t == c:
        return True
    if isinstance(t, Enc):
        return carried_outside(t.body, c, escape)
    if isinstance(t, Cat):
        return carried_outside(t.left, c, escape) or carried_outside(t.right, c, escape)
    return False


def outside_ancestors(t: Term, c: Term, escape) -> list[Term]:
    """Encryptions lying on some escape-avoiding carried path from ``t`` down to ``c``."""
    out: list[Term] = []

    def walk(u: Term) -> bool:
        if u in escape:
            return False
        if u == c:
            return True
        if isinstance(u, Enc):
            if walk(u.body):
                if u not in out:
                    out.append(u)
                return True
            return False
        if isinstance(u, Cat):
            a = walk(u.left)
            b = walk(u.right)
            return a or b
        return False

    walk(t)
    return out


def size(t: Term) -> int:
    return 1 + sum(size(c) for c in children(t))


# ---------------------------------------------------------------------------
# Substitution

Subst = Mapping[Var, Term]


def substitute(s: Subst, t: Term) -> Term:
    if not s:
        return t
    return _subst(s, t)


def _subst(s: Subst, t: Term) -> Term:
    if isinstance(t, Var):
        return s.get(t, t)
    if isinstance(t, Enc):
        b, k = _subst(s, t.body), _subst(s, t.key)
        return t if b is t.body and k is t.key else Enc(b, k)
    if isinstance(t, Cat):
        a, b = _subst(s, t.left), _subst(s, t.right)
        return t if a is t.left and b is t.right else Cat(a, b)
    if isinstance(t, Invk):
        return invk(_subst(s, t.arg))
    if isinstance(t, Pubk):
        a = _subst(s, t.arg)
        return t if a is t.arg else Pubk(a)
    if isinstance(t, Privk):
        a = _subst(s, t.arg)
        return t if a is t.arg else Privk(a)
    if isinstance(t, Ltk):
        a, b = _subst(s, t.left), _subst(s, t.right)
        return t if a is t.left and b is t.right else Ltk(a, b)
    return t


def compose(outer: Subst, inner: Subst) -> dict[Var, Term]:
    """Substitution equivalent to applying ``inner`` then ``outer``."""
    out = {v: substitute(outer, t) for v, t in inner.items()}
    for v, t in outer.items():
        out.setdefault(v, t)
    return {v: t for v, t in out.items() if v != t}


def normalize(t: Term) -> Term:
    """Rebuild ``t`` through the normalizing constructors."""
    if isinstance(t, Invk):
        return invk(normalize(t.arg))
    if isinstance(t, Enc):
        return Enc(normalize(t.body), normalize(t.key))
    if isinstance(t, Cat):
        return Cat(normalize(t.left), normalize(t.right))
    if isinstance(t, Pubk):
        return Pubk(normalize(t.arg))
    if isinstance(t, Privk):
        return Privk(normalize(t.arg))
    if isinstance(t, Ltk):
        return Ltk(normalize(t.left), normalize(t.right))
    return t


def is_normal(t: Term) -> bool:
    if isinstance(t, Invk):
        return isinstance(t.arg, Var)
    return all(is_normal(c) for c in children(t))


def can_bind(v: Var, t: Term) -> bool:
    """Sort discipline: may ``v`` stand for ``t``?"""
    if v.sort == MESG:
        return True
    if not is_atom(t):
        return False
    return sort_of(t) == v.sort


# ---------------------------------------------------------------------------
# Matching


def match(pattern: Term, target: Term, seed: Optional[Subst] = None) -> Optional[dict[Var, Term]]:
    """One-way matching: find s extending ``seed`` with substitute(s, pattern) == target."""
    s = dict(seed) if seed else {}
    return s if _match(pattern, target, s) else None


def _match(p: Term, t: Term, s: dict) -> bool:
    if isinstance(p, Var):
        bound = s.get(p)
        if bound is not None:
            return bound == t
        if not can_bind(p, t):
            return False
        s[p] = t
        return True
    if isinstance(p, Invk):
        # invk(x) matches any akey atom whose inverse x can stand for.
        if sort_of(t) != AKEY:
            return False
        return _match(p.arg, invk(t), s)
    if type(p) is not type(t):
        return False
    if isinstance(p, Tag):
        return p.text == t.text
    pc, tc = children(p), children(t)
    return all(_match(a, b, s) for a, b in zip(pc, tc))


# ---------------------------------------------------------------------------
# Unification


def _fresher(a: Var, b: Var) -> bool:
    """Prefer eliminating renamed (suffixed) variables so originals survive."""
    return _suffix(a) > _suffix(b)


def _suffix(v: Var) -> int:
    head, sep, tail = v.name.rpartition("-")
    if sep and tail.isdigit():
        return int(tail) + 1
    return 0


def unify(t1: Term, t2: Term, seed: Optional[Subst] = None) -> Optional[dict[Var, Term]]:
    """Most general sort-respecting unifier (idempotent), or None."""
    s: dict[Var, Term] = dict(seed) if seed else {}
    if not _unify(t1, t2, s):
        return None
    return _resolve(s)


def unify_all(pairs: Iterable[tuple[Term, Term]], seed: Optional[Subst] = None) -> Optional[dict[Var, Term]]:
    s: dict[Var, Term] = dict(seed) if seed else {}
    for a, b in pairs:
        if not _unify(a, b, s):
            return None
    return _resolve(s)


def _walk(t: Term, s: dict) -> Term:
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


def _deep(t: Term, s: dict) -> Term:
    """Apply a triangular substitution fully, renormalizing."""
    t = _walk(t, s)
    if isinstance(t, Var):
        return t
    kids = children(t)
    if not kids:
        return t
    if isinstance(t, Invk):
        return invk(_deep(t.arg, s))
    new = [_deep(c, s) for c in kids]
    return type(t)(*new)


def _resolve(s: dict) -> dict[Var, Term]:
    return {v: _deep(v, s) for v in s if _deep(v, s) != v}


def _bind(v: Var, t: Term, s: dict) -> bool:
    t = _deep(t, s)
    if isinstance(t, Var) and t == v:
        return True
    if not can_bind(v, t):
        return False
    if occurs(v, t):
        return False
    s[v] = t
    return True


def _unify(a: Term, b: Term, s: dict) -> bool:
    a = _walk(a, s)
    b = _walk(b, s)
    if a == b:
        return True
    if isinstance(a, Var) and isinstance(b, Var):
        if a.sort == b.sort:
            if _fresher(b, a):
                return _bind(b, a, s)
            return _bind(a, b, s)
        if a.sort == MESG:
            return _bind(a, b, s)
        if b.sort == MESG:
            return _bind(b, a, s)
        return False
    if isinstance(a, Var):
        return _bind(a, b, s)
    if isinstance(b, Var):
        return _bind(b, a, s)
    if isinstance(a, Invk) or isinstance(b, Invk):
        if isinstance(b, Invk) and not isinstance(a, Invk):
            a, b = b, a
        # a = invk(x); b is an akey term that is not a variable.
        if sort_of(b) != AKEY:
            return False
        if isinstance(b, Invk):
            return _unify(a.arg, b.arg, s)
        return _unify(a.arg, invk(b), s)
    if type(a) is not type(b):
        return False
    if isinstance(a, Tag):
        return a.text == b.text
    for x, y in zip(children(a), children(b)):
        if not _unify(x, y, s):
            return False
    return True


# ---------------------------------------------------------------------------
# Traces

SEND, RECV = "send", "recv"


def originates_at(trace, atom: Term) -> Optional[int]:
    """Position of the first event carrying ``atom`` if that event is a send."""
    for i, ev in enumerate(trace):
        if carries(ev.message, atom):
            return i if ev.direction == SEND else None
    return None


def acquired_at(trace, var: Var) -> Optional[int]:
    """Position where ``var`` first occurs, if that is a reception carrying it."""
    for i, ev in enumerate(trace):
        if occurs(var, ev.message):
            if ev.direction == RECV and carries(ev.message, var):
                return i
            return None
    return None


def gains_at(trace, atom: Term) -> Optional[int]:
    """First position whose message carries ``atom``, regardless of direction."""
    for i, ev in enumerate(trace):
        if carries(ev.message, atom):
            return i
    return None


# ---------------------------------------------------------------------------
# Surface syntax


def parse_term(form: SExpr, env: Mapping[str, Var]) -> Term:
    """Parse surface syntax, resolving symbols through ``env``."""
    if isinstance(form, String):
        return Tag(form.text)
    if isinstance(form, Symbol):
        v = env.get(form.text)
        if v is None:
            raise TermError(f"undeclared variable {form.text}")
        return v
    if isinstance(form, Integer):
        raise TermError(f"integer {form.value} is not a term")
    if not form.items or form.head is None:
        raise TermError("malformed term")
    head = form.head
    args = [parse_term(f, env) for f in form.items[1:]]
    if head == "cat":
        return cat(*args)
    if head == "enc":
        key = args[-1] if args else None
        if key is not None and sort_of(key) not in (SKEY, AKEY, MESG):
            raise TermError(f"bad encryption key {key!r}")
        return enc(*args)
    if head in ("pubk", "privk"):
        if len(args) != 1 or sort_of(args[0]) != NAME:
            raise TermError(f"({head} name) expected")
        return Pubk(args[0]) if head == "pubk" else Privk(args[0])
    if head == "invk":
        if len(args) != 1 or sort_of(args[0]) != AKEY:
            raise TermError("(invk akey) expected")
        return invk(args[0])
    if head == "ltk":
        if len(args) != 2 or any(sort_of(a) != NAME for a in args):
            raise TermError("(ltk name name) expected")
        return Ltk(args[0], args[1])
    raise TermError(f"unknown term constructor {head}")


def _flatten_cat(t: Term) -> list[Term]:
    out = []
    while isinstance(t, Cat):
        out.append(t.left)
        t = t.right
    out.append(t)
    return out


def term_to_sexpr(t: Term) -> SExpr:
    if isinstance(t, Var):
        return sym(t.name)
    if isinstance(t, Tag):
        return String(t.text)
    if isinstance(t, Pubk):
        return slist(sym("pubk"), term_to_sexpr(t.arg))
    if isinstance(t, Privk):
        return slist(sym("privk"), term_to_sexpr(t.arg))
    if isinstance(t, Invk):
        return slist(sym("invk"), term_to_sexpr(t.arg))
    if isinstance(t, Ltk):
        return slist(sym("ltk"), term_to_sexpr(t.left), term_to_sexpr(t.right))
    if isinstance(t, Enc):
        parts = [term_to_sexpr(p) for p in _flatten_cat(t.body)]
        return slist(sym("enc"), *parts, term_to_sexpr(t.key))
    if isinstance(t, Cat):
        return slist(sym("cat"), *[term_to_sexpr(p) for p in _flatten_cat(t)])
    raise TermError(f"unknown term {t!r}")


def parse_decls(forms: Iterable[SExpr]) -> dict[str, Var]:
    """Parse ``((a b name) (k skey) ...)`` into an ordered name -> Var map."""
    env: dict[str, Var] = {}
    for decl in forms:
        if not isinstance(decl, SList) or len(decl) < 2:
            raise TermError("malformed variable declaration")
        sort_sym = decl.items[-1]
        if not isinstance(sort_sym, Symbol) or sort_sym.text not in SORTS:
            raise TermError(f"unknown sort in declaration {decl.items[-1]}")
        for name in decl.items[:-1]:
            if not isinstance(name, Symbol):
                raise TermError("variable names must be symbols")
            if name.text in env:
                raise TermError(f"variable {name.text} declared twice")
            env[name.text] = Var(name.text, sort_sym.text)
    return env


def decls_to_sexpr(vs: Iterable[Var], order: tuple[str, ...] = (MESG, TEXT, DATA, NAME, SKEY, AKEY)) -> list[SExpr]:
    groups: dict[str, list[Var]] = {}
    for v in vs:
        groups.setdefault(v.sort, []).append(v)
    out = []
    for srt in order:
        if srt in groups:
            out.append(slist(*[sym(v.name) for v in groups[srt]], sym(srt)))
    return out
