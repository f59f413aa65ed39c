import warnings

import pytest

from strandspace.corpus import load_fixture
from strandspace.protocol import (
    ProtocolError,
    inherited_assumptions,
    parse_herald,
    parse_protocol,
    parse_role,
    protocol_to_sexpr,
)
from strandspace.sexpr import read_one
from strandspace.terms import Ltk, Var


@pytest.fixture(scope="module")
def caves():
    return load_fixture("caves").source.protocols["caves"]


def test_caves_has_five_roles(caves):
    assert [r.name for r in caves.roles] == ["attester", "client", "server", "verifier", "epca"]
    assert caves.role("verifier").length == 5
    assert caves.role("server").length == 8


def test_printing_round_trips(caves):
    again = parse_protocol(protocol_to_sexpr(caves))
    assert again == caves
    assert protocol_to_sexpr(again) == protocol_to_sexpr(caves)


def test_height_bounded_non_origination_is_deferred(caves):
    verifier = caves.role("verifier")
    env = {v: v for v in verifier.variables}
    a = Var("a", "name")
    short, _ = inherited_assumptions(verifier, 4, env)
    full, uniq = inherited_assumptions(verifier, 5, env)
    assert Ltk(a, a) not in short
    assert Ltk(a, a) in full
    assert Var("nv", "data") in uniq


def test_uniq_orig_is_inherited_only_after_origination(caves):
    client = caves.role("client")
    env = {v: v for v in client.variables}
    _, uniq = inherited_assumptions(client, 1, env)
    assert Var("k", "skey") in uniq
    with pytest.raises(ProtocolError):
        inherited_assumptions(client, 7, env)


@pytest.mark.parametrize(
    "text, message",
    [
        ("(defrole r (vars (n data)) (trace (recv n)) (uniq-orig n))", "does not originate"),
        ("(defrole r (vars (x mesg)) (trace (send x)) (non-orig x))", "not an atom"),
        ("(defrole r (vars (n data)) (trace (send n)) (frobnicate))", "unknown clause"),
        ("(defrole r (vars (n data)) (trace))", "nonempty"),
        ("(defrole r (vars (n data)) (trace (send n)) (annotations n (4 (p n))))", "out of range"),
    ],
)
def test_bad_roles_are_rejected(text, message):
    with pytest.raises(ProtocolError, match=message):
        parse_role(read_one(text))


def test_unused_variable_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        parse_role(read_one("(defrole r (vars (n m data)) (trace (send n)))"))
    assert any("unused" in str(w.message) for w in caught)


def test_duplicate_and_reserved_role_names():
    role = "(defrole {} (vars (n data)) (trace (send n)))"
    with pytest.raises(ProtocolError, match="duplicate"):
        parse_protocol(read_one(f"(defprotocol p basic {role.format('r')} {role.format('r')})"))
    with pytest.raises(ProtocolError, match="reserved"):
        parse_protocol(read_one(f"(defprotocol p basic {role.format('listener')})"))
    with pytest.raises(ProtocolError, match="algebra"):
        parse_protocol(read_one(f"(defprotocol p diffie-hellman {role.format('r')})"))


def test_herald_options():
    h = parse_herald(read_one('(herald "T" (bound 7) (check-nonces))'))
    assert (h.title, h.bound, h.check_nonces) == ("T", 7, True)
    assert parse_herald(read_one('(herald "T")')).bound is None
