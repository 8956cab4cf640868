"""Kernel invariants checked exhaustively against truth tables.

Each ``check_*`` takes a store with variables declared and one or more value
tables over those variables, builds diagrams and compares every assignment.
They are shared by the hypothesis tests and the acceptance run.
"""

from __future__ import annotations

import math
import operator
import random

from spudd.add import TERMINAL_LEVEL, DiagramStore

from truth import assignments, diagram_from_table, table_index, truth_table

VALUES = [0.0, 0.5, 1.0, 2.0, -1.5, 3.25, 10.0, 0.1, 0.9]
PROBABILITIES = [0.0, 0.1, 0.25, 0.5, 0.9, 1.0]

OPS = {
    "add": operator.add,
    "multiply": operator.mul,
    "max": max,
    "min": min,
    "subtract": operator.sub,
}


def table_of(store, f, variables):
    return truth_table(store, f, variables)


def _value_at(table, variables, a):
    return table[table_index(a, variables)]


def check_canonicity(store, variables, table, shuffled):
    """Three construction routes for one function give one ref."""
    f1 = store.from_table(table, variables)
    f2 = diagram_from_table(store, variables, table)
    # build from the shuffled variable list, then permute the table to match
    perm = [variables.index(v) for v in shuffled]
    permuted = [0.0] * len(table)
    for a in assignments(shuffled):
        permuted[table_index(a, shuffled)] = _value_at(table, variables, a)
    f3 = diagram_from_table(store, shuffled, permuted)
    assert f1 == f2 == f3, perm
    return f1


def check_reduced(store, f):
    """No redundant or duplicate nodes; levels strictly increase along edges."""
    k = store._k
    seen = {}
    for n in store._reachable(f.node):
        level = k.level(n)
        if level == TERMINAL_LEVEL:
            key = ("t", type(k.value(n)), k.value(n))
        else:
            hi, lo = k.hi(n), k.lo(n)
            assert hi != lo, "redundant node"
            assert k.level(hi) > level and k.level(lo) > level, "ordering violated"
            key = (level, hi, lo)
        assert key not in seen, "duplicate node"
        seen[key] = n


def check_pointwise(store, variables, ta, tb, tp):
    f = store.from_table(ta, variables)
    g = store.from_table(tb, variables)
    p = store.from_table(tp, variables)
    for name, fn in OPS.items():
        h = store.apply(name, f, g)
        check_reduced(store, h)
        assert table_of(store, h, variables) == [fn(x, y) for x, y in zip(ta, tb)], name
    assert table_of(store, store.scale(f, 0.9), variables) == [x * 0.9 for x in ta]
    assert table_of(store, store.complement_one(p), variables) == [1.0 - x for x in tp]
    assert store.sup_norm_diff(f, g) == max(abs(x - y) for x, y in zip(ta, tb))
    for v in variables:
        for bit in (False, True):
            r = store.restrict(f, v, bit)
            assert v not in store.support(r)
            for a in assignments(variables):
                assert store.evaluate(r, a) == store.evaluate(f, {**a, v: bit})
        s = store.sum_out(f, v)
        assert v not in store.support(s)
        for a in assignments(variables):
            assert store.evaluate(s, a) == store.evaluate(f, {**a, v: True}) + store.evaluate(f, {**a, v: False})
    # combined product and elimination of a variable subset
    cube = variables[::2]
    keep = [v for v in variables if v not in cube]
    ps = store.product_sum_out(f, g, cube)
    for a in assignments(keep):
        expected = math.fsum(
            _value_at(ta, variables, {**a, **c}) * _value_at(tb, variables, {**a, **c}) for c in assignments(cube)
        )
        assert math.isclose(store.evaluate(ps, a), expected, rel_tol=1e-12, abs_tol=1e-12)
    # swap is an involution that moves the support to the primed copies
    sw = store.swap_primed(f)
    assert store.support(sw) == [store.primed(v) for v in store.support(f)]
    assert store.swap_primed(sw) == f


def check_algebra(store, variables, ta, tb, tc):
    f, g, h = (store.from_table(t, variables) for t in (ta, tb, tc))
    add = lambda x, y: store.apply("add", x, y)  # noqa: E731
    assert add(f, g) == add(g, f)
    assert store.apply("multiply", f, g) == store.apply("multiply", g, f)
    assert store.apply("max", f, g) == store.apply("max", g, f)
    # associativity holds exactly when no rounding happens; compare pointwise within rounding
    left, right = add(add(f, g), h), add(f, add(g, h))
    for x, y in zip(table_of(store, left, variables), table_of(store, right, variables)):
        assert math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-12)
    m = store.apply("max", f, g)
    assert all(x >= y and x >= z for x, y, z in zip(table_of(store, m, variables), ta, tb))
    assert store.apply("multiply", f, store.mk_terminal(1.0)) == f
    assert store.apply("add", f, store.mk_terminal(0.0)) == f


def check_probability_closure(store, variables, tp):
    p = store.from_table(tp, variables)
    assert store.apply("add", p, store.complement_one(p)) == store.mk_terminal(1.0)


def check_etl_bound(store, variables, table):
    f = store.from_table(table, variables)
    st = store.stats(f)
    assert st["leaves"] == len(set(table))
    assert st["leaves"] <= st["equivalent_tree_leaves"] <= 2 ** len(store.support(f))


def check_cache_transparency(kernel, names, ta, tb):
    """A store with a tiny cache gives the same refs as recomputation in a fresh store."""
    capped = DiagramStore(cache_limit=4, kernel=kernel)
    xs = capped.declare(*names)
    f, g = capped.from_table(ta, xs), capped.from_table(tb, xs)
    first = capped.apply("max", capped.apply("add", f, g), g)
    capped.clear_cache()
    again = capped.apply("max", capped.apply("add", f, g), g)
    assert first == again


def run_case(rng: random.Random, kernel) -> None:
    """One randomized case over 1 to 6 variables exercising every invariant."""
    n = rng.randint(1, 6)
    names = [f"v{i}" for i in range(n)]
    store = DiagramStore(kernel=kernel)
    xs = store.declare(*names)
    size = 1 << n
    ta, tb, tc = ([rng.choice(VALUES) for _ in range(size)] for _ in range(3))
    tp = [rng.choice(PROBABILITIES) for _ in range(size)]
    shuffled = xs[:]
    rng.shuffle(shuffled)
    f = check_canonicity(store, xs, ta, shuffled)
    check_reduced(store, f)
    check_pointwise(store, xs, ta, tb, tp)
    check_algebra(store, xs, ta, tb, tc)
    check_probability_closure(store, xs, tp)
    check_etl_bound(store, xs, ta)
    check_cache_transparency(kernel, names, ta, tb)
