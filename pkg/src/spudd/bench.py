"""Generators for the benchmark MDP families.

* ``expon``: a binary counter.  Action ``a_i`` makes ``X_i`` true when every
  lower variable is true and makes all lower variables false; the only
  progress towards the all-true goal is a counter increment, so all ``2**n``
  states have different values.
* ``linear``: action ``a_i`` makes ``X_i`` true when ``X_{i-1}`` is true
  (``a_1`` always does); reward when ``X_n`` is true.  The value depends only
  on the highest true variable, giving ``n + 1`` distinct values.  Variables
  are declared from ``X_n`` down to ``X_1`` so the value diagram is a chain.
  This family is a reconstruction from its published size properties.
* ``factory_mini``: the *bolt* action of the small factory example plus one
  variable no action or reward depends on.
* ``random``: seeded random shallow CPT and reward trees for fuzzing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .add import DiagramRef, DiagramStore, VarId
from .model import ActionSpec, MdpSpec, persistence

FAMILIES = ("expon", "linear", "factory_mini", "random")


@dataclass
class BenchConfig:
    family: str
    n: int = 6
    reward: float | None = None
    discount: float | None = None
    seed: int = 0
    actions: int = 3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.discount is not None and not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")


def generate(config: BenchConfig, store: DiagramStore | None = None) -> MdpSpec:
    kw = {}
    if config.reward is not None:
        kw["reward"] = config.reward
    if config.discount is not None:
        kw["discount"] = config.discount
    if config.family == "expon":
        return gen_expon(config.n, store=store, **kw)
    if config.family == "linear":
        return gen_linear(config.n, store=store, **kw)
    if config.family == "factory_mini":
        return gen_factory_mini(store=store)
    return gen_random(config.n, config.actions, config.seed, store=store, **kw)


def _conjunction(store: DiagramStore, variables) -> DiagramRef:
    acc = store.mk_terminal(1.0)
    for v in variables:
        acc = store.apply("multiply", acc, store.indicator(v))
    return acc


def gen_expon(n: int, reward: float = 1e16, discount: float = 0.99, store: DiagramStore | None = None) -> MdpSpec:
    store = store or DiagramStore()
    xs = store.declare(*(f"X{i}" for i in range(1, n + 1)))
    zero = store.mk_terminal(0.0)
    actions = {}
    for i, target in enumerate(xs):
        cpts: dict[VarId, DiagramRef] = {}
        for j, v in enumerate(xs):
            if j < i:
                cpts[v] = zero
            elif j == i:
                cpts[v] = store.apply("max", _conjunction(store, xs[:i]), store.indicator(target))
            else:
                cpts[v] = persistence(store, v)
        actions[f"a{i + 1}"] = ActionSpec(cpts)
    r = store.scale(_conjunction(store, xs), reward)
    return MdpSpec(store, xs, actions, r, discount)


def gen_linear(n: int, reward: float = 10.0, discount: float = 0.9, store: DiagramStore | None = None) -> MdpSpec:
    store = store or DiagramStore()
    declared = store.declare(*(f"X{i}" for i in range(n, 0, -1)))
    xs = declared[::-1]  # xs[i] is X_{i+1}
    one = store.mk_terminal(1.0)
    actions = {}
    for i, target in enumerate(xs):
        cpts = {v: persistence(store, v) for v in declared}
        if i == 0:
            cpts[target] = one
        else:
            cpts[target] = store.apply("max", store.indicator(xs[i - 1]), store.indicator(target))
        actions[f"a{i + 1}"] = ActionSpec(cpts)
    r = store.scale(store.indicator(xs[-1]), reward)
    return MdpSpec(store, declared, actions, r, discount)


FACTORY_VARIABLES = ("C", "P", "PL", "APU", "BPU", "ADR", "BDR", "BO", "SPARE")


def bolt_connect_cpt(store: DiagramStore) -> DiagramRef:
    """P(C' | C, PL, APU, BPU, ADR, BDR, BO) for the bolt action.

    ``0.9 * (C + !C * ((PL * !APU + !PL) * ADR * BDR + PL * APU * BPU) * BO)``
    """
    v = store.var
    ind = store.indicator

    def neg(name):
        return store.complement_one(ind(v(name)))

    def mul(*fs):
        acc = fs[0]
        for f in fs[1:]:
            acc = store.apply("multiply", acc, f)
        return acc

    def add(f, g):
        return store.apply("add", f, g)

    drilled = mul(add(mul(ind(v("PL")), neg("APU")), neg("PL")), ind(v("ADR")), ind(v("BDR")))
    punched = mul(ind(v("PL")), ind(v("APU")), ind(v("BPU")))
    connect = add(ind(v("C")), mul(neg("C"), add(drilled, punched), ind(v("BO"))))
    return store.scale(connect, 0.9)


def factory_reward(store: DiagramStore) -> DiagramRef:
    c, p = store.indicator(store.var("C")), store.indicator(store.var("P"))
    painted = store.scale(store.apply("multiply", c, p), 10.0)
    unpainted = store.scale(store.apply("multiply", c, store.complement_one(p)), 5.0)
    return store.apply("add", painted, unpainted)


def gen_factory_mini(store: DiagramStore | None = None) -> MdpSpec:
    store = store or DiagramStore()
    xs = store.declare(*FACTORY_VARIABLES)
    cpts = {v: persistence(store, v) for v in xs}
    cpts[store.var("C")] = bolt_connect_cpt(store)
    cpts[store.var("APU")] = store.scale(store.indicator(store.var("APU")), 1.0)
    return MdpSpec(store, xs, {"bolt": ActionSpec(cpts)}, factory_reward(store), 0.9)


def _random_tree(rng: random.Random, store: DiagramStore, xs, depth: int, leaf) -> DiagramRef:
    def grow(d: int, used: frozenset) -> DiagramRef:
        free = [v for v in xs if v not in used]
        if d == 0 or not free or rng.random() < 0.25:
            return store.mk_terminal(leaf())
        v = rng.choice(free)
        then_ = grow(d - 1, used | {v})
        else_ = grow(d - 1, used | {v})
        return store.branch(v, then_, else_)

    return grow(depth, frozenset())


def gen_random(
    n: int,
    actions: int = 3,
    seed: int = 0,
    discount: float = 0.9,
    reward: float = 10.0,
    store: DiagramStore | None = None,
) -> MdpSpec:
    """Random MDP: CPT trees of depth <= 2 with probabilities in {0, 0.1, ..., 1}."""
    if n > 12:
        raise ValueError("random MDPs are limited to 12 variables")
    rng = random.Random(seed)
    store = store or DiagramStore()
    xs = store.declare(*(f"v{i}" for i in range(1, n + 1)))
    specs = {}
    for a in range(actions):
        cpts = {v: _random_tree(rng, store, xs, 2, lambda: rng.randint(0, 10) / 10) for v in xs}
        specs[f"act{a}"] = ActionSpec(cpts)
    r = _random_tree(rng, store, xs, 3, lambda: float(rng.randint(0, int(reward))))
    return MdpSpec(store, xs, specs, r, discount)
