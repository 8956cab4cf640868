import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spudd.add import DiagramStore
from spudd.bench import gen_expon, gen_factory_mini, gen_linear, gen_random
from spudd.model import persistence
from spudd.parser import ParseError, SourceSpan, emit, parse, parse_file, tokenize

MINI = """
; two variables, one action
(variables C P)
(action paint
  (P (C (true (0.9)) (false (P (true (1)) (false (0)))))))
(reward (C (true (P (true (10)) (false (5)))) (false (0))))
(discount 0.9)
"""


def same_diagrams(a, b):
    return (
        a.reward == b.reward
        and a.discount == b.discount
        and list(a.actions) == list(b.actions)
        and all(a.actions[n].cpts[v] == b.actions[n].cpts[v] for n in a.actions for v in a.variables)
    )


def test_parse_small_model():
    spec = parse(MINI)
    s = spec.store
    c, p = s.var("C"), s.var("P")
    assert spec.variables == [c, p]
    assert spec.discount == 0.9
    assert s.evaluate(spec.reward, {c: True, p: False}) == 5.0
    assert s.evaluate(spec.reward, {c: True, p: True}) == 10.0
    assert s.evaluate(spec.reward, {c: False, p: True}) == 0.0
    paint = spec.actions["paint"]
    assert paint.cpts[c] == persistence(s, c)
    assert s.evaluate(paint.cpts[p], {c: True, p: False}) == 0.9
    assert s.evaluate(paint.cpts[p], {c: False, p: True}) == 1.0


def test_factory_fixture_has_seven_node_connect_cpt(fixtures_dir):
    spec = parse_file(fixtures_dir / "factory_mini.mdp")
    s = spec.store
    st_ = s.stats(spec.actions["bolt"].cpts[s.var("C")])
    assert (st_["internal_nodes"], st_["leaves"], st_["equivalent_tree_leaves"]) == (7, 2, 12)


def test_trees_are_reduced_on_input():
    spec = parse("(variables x y)(action a (x (y (true (0.5)) (false (0.5)))))(reward (0))(discount 0)")
    s = spec.store
    assert spec.actions["a"].cpts[s.var("x")] == s.mk_terminal(0.5)


def test_tree_order_need_not_match_declaration():
    spec = parse(
        "(variables x y)(action a (x (y (true (x (true (1)) (false (0.5)))) (false (0)))))(reward (0))(discount 0.5)"
    )
    s = spec.store
    x, y = s.var("x"), s.var("y")
    cpt = spec.actions["a"].cpts[x]
    assert s.top_var(cpt) == x
    assert [s.evaluate(cpt, {x: a, y: b}) for a in (0, 1) for b in (0, 1)] == [0.0, 0.5, 0.0, 1.0]


def test_whitespace_and_comments_are_ignored():
    squeezed = "(variables C P)(action paint(P(C(true(0.9))(false(P(true(1))(false(0)))))))" \
               "(reward(C(true(P(true(10))(false(5))))(false(0))))(discount 0.9)"
    assert emit(parse(squeezed)) == emit(parse(MINI))


def test_number_syntax():
    spec = parse("(variables x)(action a (x (.5)))(reward (x (true (-1e3)) (false (+2.))))(discount 0.25)")
    s = spec.store
    assert s.terminal_values(spec.reward) == [-1000.0, 2.0]


def error_for(text):
    with pytest.raises(ParseError) as info:
        parse(text)
    err = info.value
    assert 0 <= err.span.start < err.span.end <= len(text)
    return err, text[err.span.start : err.span.end]


@pytest.mark.parametrize(
    "text, token, fragment",
    [
        ("(variables C)(action a (C (1.2)))(reward (0))(discount 0.9)", "1.2", "outside [0, 1]"),
        ("(variables C)(action a (C (-0.1)))(reward (0))(discount 0.9)", "-0.1", "outside [0, 1]"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 1.5)", "1.5", "discount"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 1)", "1", "discount"),
        ("(variables C)(action a (D (0.2)))(reward (0))(discount 0.5)", "D", "unknown variable"),
        ("(variables C)(action a (C (0.2)))(reward (D (true (1)) (false (0))))(discount 0.5)", "D", "unknown variable"),
        ("(variables C)(action a (C (0.2)) (C (0.1)))(reward (0))(discount 0.5)", "C", "duplicate CPT"),
        ("(variables C)(action a (C (C (true (C (true (1)) (false (0)))) (false (0)))))(reward (0))(discount 0.5)", "C", "twice"),
        ("(variables C C)(action a (C (0.2)))(reward (0))(discount 0.5)", "C", "declared twice"),
        ("(variables true)(action a (true (0.2)))(reward (0))(discount 0.5)", "true", "reserved"),
        ("(variables C)(action a (C (0.2)))(action a (C (0.1)))(reward (0))(discount 0.5)", "a", "duplicate action"),
        ("(variables C)(reward (0))(discount 0.5)", "(", "at least one action"),
        ("(variables C)(action a)(reward (0))(discount 0.5)", ")", "at least one CPT"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 0.5) extra", "extra", "after the discount"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 0.5", "5", "end of input"),
        ("(variables C)(action a (C (0.2)))(reward (C (yes (1)) (false (0))))(discount 0.5)", "yes", "'true'"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 0.5x)", "0.5x", "unexpected"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 1e999)", "1e999", "out of range"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 0.5) é", "é", "non-ASCII"),
        ("(variables C)(action a (C (0.2)))(reward (0))(discount 0.5)}", "}", "unexpected"),
    ],
)
def test_errors_carry_spans(text, token, fragment):
    err, located = error_for(text)
    assert located == token
    assert fragment in str(err)


def test_error_message_has_line_and_column():
    text = "(variables C)\n(action a\n  (C (2.0)))\n(reward (0))\n(discount 0.5)"
    err, _ = error_for(text)
    assert str(err).startswith("line 3, column 7:")
    assert SourceSpan(err.span.start, err.span.end).line_col(text) == (3, 7)


def test_tokenize_skips_comments():
    kinds = [t.kind for t in tokenize("( x ; comment ) ignored\n 0.5 )")]
    assert kinds == ["open", "ident", "real", "close"]


@pytest.mark.parametrize(
    "make",
    [gen_factory_mini, lambda store: gen_expon(6, store=store), lambda store: gen_linear(5, store=store)],
    ids=["factory_mini", "expon6", "linear5"],
)
def test_round_trip_in_same_store(kernel, make):
    spec = make(DiagramStore(kernel=kernel))
    text = emit(spec)
    again = parse(text, spec.store)
    assert again.variables == spec.variables
    assert same_diagrams(spec, again)
    assert emit(again) == text


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 10_000))
def test_round_trip_random_models(n, actions, seed):
    spec = gen_random(n, actions, seed)
    text = emit(spec)
    assert same_diagrams(spec, parse(text, spec.store))
    # a fresh store reproduces the same text
    assert emit(parse(text)) == text


def test_emit_is_deterministic():
    assert emit(gen_random(6, 3, 9)) == emit(gen_random(6, 3, 9))
    assert emit(gen_factory_mini()) == emit(gen_factory_mini())


def test_emit_leaves_out_persistence():
    text = emit(gen_factory_mini())
    assert "(SPARE" not in text
    assert "(APU (APU" not in text
    assert "(C (C" in text


def test_do_nothing_action_round_trips():
    s = DiagramStore()
    (x,) = s.declare("x")
    from spudd.model import ActionSpec, MdpSpec

    spec = MdpSpec(s, [x], {"wait": ActionSpec({x: persistence(s, x)})}, s.indicator(x), 0.5)
    assert same_diagrams(spec, parse(emit(spec), s))


def test_fixture_files_match_generators(fixtures_dir):
    generated = {
        "factory_mini": gen_factory_mini(),
        "expon6": gen_expon(6),
        "linear6": gen_linear(6),
        "random6_seed3": gen_random(6, 3, 3),
        "random8_seed1": gen_random(8, 3, 1),
    }
    for name, spec in generated.items():
        assert (fixtures_dir / f"{name}.mdp").read_text() == emit(spec), name
