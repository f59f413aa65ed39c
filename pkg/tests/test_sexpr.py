import pytest
from hypothesis import given

from strandspace.sexpr import Integer, ParseError, SList, String, Symbol, read_all, read_one, write, write_all
from strategies import sexprs


def test_reads_nested_lists_strings_and_integers():
    form = read_one('(defstrand client 3 (r r) "cert" -12)')
    assert form.head == "defstrand"
    assert form.items[2] == Integer(3)
    assert form.items[4] == String("cert")
    assert form.items[5] == Integer(-12)


def test_comments_and_whitespace_are_skipped():
    assert read_all("; nothing here\n  (a) ; trailing\n(b)") == [SList((Symbol("a"),)), SList((Symbol("b"),))]


def test_positions_are_recorded():
    form = read_one("\n  (x (y))")
    assert form.pos == (2, 3)
    assert form.items[1].pos == (2, 6)


@pytest.mark.parametrize(
    "text, where",
    [("(a (b)", (1, 1)), ("a)", (1, 2)), ('("open', (1, 2)), ("(a 'b)", (1, 4))],
)
def test_parse_errors_carry_positions(text, where):
    with pytest.raises(ParseError) as info:
        read_all(text)
    assert (info.value.line, info.value.column) == where


def test_escapes_round_trip():
    s = String('say "hi" \\ there')
    assert read_one(write(s)) == s


def test_long_lists_break_with_two_column_indent():
    form = read_one("(defskeleton " + " ".join(f"(item{i} value{i})" for i in range(12)) + ")")
    text = write(form, width=40)
    assert all(len(line) <= 40 for line in text.splitlines())
    assert text.splitlines()[1].startswith("  (")
    assert read_one(text) == form


def test_write_rejects_tiny_width():
    with pytest.raises(ValueError):
        write(Symbol("x"), width=5)


@given(sexprs)
def test_read_write_read_is_identity(form):
    assert read_one(write(form)) == form


@given(sexprs)
def test_write_of_read_is_a_textual_fixpoint(form):
    text = write(form)
    assert write(read_one(text)) == text


@given(sexprs)
def test_write_all_round_trips_many_forms(form):
    forms = [form, SList((form,))]
    assert read_all(write_all(forms)) == forms
