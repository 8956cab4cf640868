import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spudd.add import DiagramStore
from spudd.bench import gen_expon, gen_factory_mini, gen_linear, gen_random
from spudd.flat import assignment, compare, flat_value_iteration, from_spec, optimal_actions, q_values
from spudd.model import ActionSpec, MdpSpec, build_partitions
from spudd.solver import (
    SolveConfig,
    bellman_backup,
    extract_policy,
    regress,
    stopping_threshold,
    tie_tolerance,
    value_iteration,
)


def test_stopping_threshold():
    assert stopping_threshold(0.01, 0.9) == pytest.approx(0.01 * 0.1 / 1.8)
    assert stopping_threshold(0.01, 0.0) == 0.0
    assert tie_tolerance(0.0) == 1e-9
    assert tie_tolerance(-1e6) == pytest.approx(1e-9 * (1 + 1e6))


@pytest.mark.parametrize("bad", [dict(epsilon=0), dict(max_iterations=0), dict(node_limit=0)])
def test_bad_config(bad):
    with pytest.raises(ValueError):
        SolveConfig(**bad)


def test_regress_constant_is_constant(kernel):
    spec = gen_random(5, 1, 3, store=DiagramStore(kernel=kernel))
    s = spec.store
    part = build_partitions(s, spec.actions["act0"], 4)
    assert regress(s, s.mk_terminal(7.5), part) == s.mk_terminal(7.5)


def test_regress_deterministic_action_moves_the_function(store):
    x, y = store.declare("x", "y")
    # x' = y, y' = not x
    action = ActionSpec({x: store.indicator(y), y: store.complement_one(store.indicator(x))})
    part = build_partitions(store, action)
    f = store.from_table([1.0, 2.0, 3.0, 4.0], [x, y])
    out = regress(store, store.swap_primed(f), part)
    for a in itertools.product((False, True), repeat=2):
        now = {x: a[0], y: a[1]}
        nxt = {x: a[1], y: not a[0]}
        assert store.evaluate(out, now) == store.evaluate(f, nxt)


@pytest.mark.parametrize("limit", [1, 3, math.inf])
def test_regress_factory_matches_explicit_expectation(kernel, limit):
    spec = gen_factory_mini(DiagramStore(kernel=kernel))
    s = spec.store
    xs = spec.variables
    rng = random.Random(1)
    table = [float(rng.randint(0, 9)) for _ in range(1 << len(xs))]
    f = s.from_table(table, xs)
    action = spec.actions["bolt"]
    out = regress(s, s.swap_primed(f), build_partitions(s, action, limit))
    for state in range(1 << len(xs)):
        now = assignment(xs, state)
        probs = [s.evaluate(action.cpts[v], now) for v in xs]
        expected = 0.0
        for nxt in range(1 << len(xs)):
            p = 1.0
            for k in range(len(xs)):
                p *= probs[k] if nxt >> k & 1 else 1.0 - probs[k]
            expected += p * table[nxt]
        assert s.evaluate(out, now) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_zero_discount_returns_reward():
    spec = gen_random(5, 2, 4, discount=0.0)
    result = value_iteration(spec.store, spec)
    assert result.value == spec.reward
    assert result.converged
    assert result.iterations == 1


def test_backup_matches_flat_q_values():
    spec = gen_random(6, 3, 8)
    s = spec.store
    flat = from_spec(spec)
    rng = np.random.default_rng(0)
    values = rng.integers(0, 20, 1 << 6).astype(float)
    v = s.from_table(list(values), spec.variables)
    q = q_values(flat, values)
    for row, name in zip(q, flat.actions):
        backup = bellman_backup(s, spec, name, v)
        assert compare(s, backup, row, spec.variables) <= 1e-12


def test_single_action_with_zero_reward_stops_at_once(store):
    (x,) = store.declare("x")
    spec = MdpSpec(store, [x], {"a": ActionSpec({x: store.mk_terminal(0.3)})}, store.mk_terminal(0.0), 0.9)
    result = value_iteration(store, spec)
    assert result.iterations == 1
    assert result.value == store.mk_terminal(0.0)


def test_expon6_has_all_distinct_values():
    spec = gen_expon(6)
    result = value_iteration(spec.store, spec)
    assert spec.store.stats(result.value)["leaves"] == 64


def test_linear_value_diagram_is_a_chain():
    spec = gen_linear(8)
    result = value_iteration(spec.store, spec)
    st_ = spec.store.stats(result.value)
    assert st_["leaves"] == 9
    assert st_["internal_nodes"] == 8


@pytest.mark.parametrize("seed", range(5))
def test_random_models_agree_with_flat_oracle(seed):
    spec = gen_random(6, 3, seed)
    s = spec.store
    result = value_iteration(s, spec)
    flat = from_spec(spec)
    oracle = flat_value_iteration(flat)
    assert result.iterations == oracle.iterations
    assert compare(s, result.value, oracle.values, spec.variables) <= 1e-9
    policy = extract_policy(s, spec, result.value)
    expected = optimal_actions(flat, oracle.values)
    for state in range(1 << 6):
        assert policy.at(s, assignment(spec.variables, state)) == expected[state]


def test_value_is_within_epsilon_of_long_run():
    spec = gen_random(6, 3, 21)
    s = spec.store
    eps = 0.01
    result = value_iteration(s, spec, SolveConfig(epsilon=eps))
    reference = flat_value_iteration(from_spec(spec), epsilon=1e-10)
    assert compare(s, result.value, reference.values, spec.variables) <= eps / 2 + 1e-9


def test_policy_single_action():
    spec = gen_factory_mini()
    result = value_iteration(spec.store, spec)
    policy = extract_policy(spec.store, spec, result.value)
    assert policy.actions == [("bolt",)]
    assert policy.diagram == spec.store.mk_int(0)


def test_identical_actions_tie(store):
    (x,) = store.declare("x")
    cpt = store.mk_terminal(0.5)
    spec = MdpSpec(store, [x], {"b": ActionSpec({x: cpt}), "a": ActionSpec({x: cpt})}, store.indicator(x), 0.9)
    result = value_iteration(store, spec)
    policy = extract_policy(store, spec, result.value)
    assert policy.actions == [("a", "b")]
    assert policy.label(0) == "a,b"


def test_expon3_policy_matches_flat_argmax():
    spec = gen_expon(3, reward=1.0, discount=0.9)
    s = spec.store
    result = value_iteration(s, spec)
    policy = extract_policy(s, spec, result.value)
    flat = from_spec(spec)
    expected = optimal_actions(flat, flat_value_iteration(flat).values)
    for state in range(8):
        assert policy.at(s, assignment(spec.variables, state)) == expected[state]


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000), st.sampled_from([1, 2, 8, math.inf]))
def test_result_is_independent_of_node_limit(n, seed, limit):
    spec = gen_random(n, 2, seed)
    s = spec.store
    base = value_iteration(s, spec)
    other = value_iteration(s, spec, SolveConfig(node_limit=limit))
    assert base.value == other.value
    assert base.deltas == other.deltas


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_deltas_contract(n, seed):
    spec = gen_random(n, 2, seed)
    result = value_iteration(spec.store, spec, SolveConfig(epsilon=1e-6))
    d = result.deltas
    for a, b in zip(d, d[1:]):
        assert b <= spec.discount * a * (1 + 1e-9) + 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_policy_unchanged_by_scaling_reward(n, seed):
    spec = gen_random(n, 3, seed)
    s = spec.store
    scaled = MdpSpec(s, spec.variables, spec.actions, s.scale(spec.reward, 4.0), spec.discount)
    p1 = extract_policy(s, spec, value_iteration(s, spec, SolveConfig(epsilon=1e-8)).value)
    p2 = extract_policy(s, scaled, value_iteration(s, scaled, SolveConfig(epsilon=4e-8)).value)
    for state in range(1 << n):
        a = assignment(spec.variables, state)
        assert p1.at(s, a) == p2.at(s, a)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_policy_actions_attain_the_backup_maximum(n, seed):
    spec = gen_random(n, 3, seed)
    s = spec.store
    v = value_iteration(s, spec).value
    policy = extract_policy(s, spec, v)
    backups = {a: bellman_backup(s, spec, a, v) for a in spec.actions}
    for state in range(1 << n):
        a = assignment(spec.variables, state)
        q = {name: s.evaluate(b, a) for name, b in backups.items()}
        best = max(q.values())
        chosen = policy.at(s, a)
        assert chosen
        assert set(chosen) == {name for name, x in q.items() if x >= best - tie_tolerance(best)}


def test_progress_callback_and_iteration_cap():
    spec = gen_expon(4)
    seen = []
    result = value_iteration(spec.store, spec, SolveConfig(max_iterations=3), progress=seen.append)
    assert not result.converged
    assert result.iterations == 3
    assert [h.iteration for h in seen] == [1, 2, 3]


def test_compaction_keeps_results(kernel):
    spec = gen_expon(5, store=DiagramStore(kernel=kernel))
    s = spec.store
    plain = value_iteration(s, spec)
    small = value_iteration(s, spec, SolveConfig(compact_nodes=50))
    assert plain.value == small.value
    assert plain.deltas == small.deltas
