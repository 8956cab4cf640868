"""Explicit-state value iteration, the reference every diagram result is checked against.

State ``s`` assigns ``bool(s >> k & 1)`` to ``spec.variables[k]``.  Diagrams
are only ever *evaluated* here; none of the ADD arithmetic is reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .add import DiagramRef, DiagramStore, VarId
from .model import MdpSpec
from .solver import stopping_threshold, tie_tolerance

DEFAULT_MAX_STATES = 1 << 20


class StateSpaceTooLarge(ValueError):
    pass


def assignment(variables: list[VarId], s: int) -> dict[VarId, bool]:
    return {v: bool(s >> k & 1) for k, v in enumerate(variables)}


def table(store: DiagramStore, f: DiagramRef, variables: list[VarId]) -> np.ndarray:
    """Values of ``f`` at all ``2**len(variables)`` states."""
    n = len(variables)
    bit_of = {v.index: k for k, v in enumerate(variables)}
    states = np.arange(1 << n, dtype=np.int64)
    out = np.empty(1 << n)
    stack = [(f, states)]
    while stack:
        g, idx = stack.pop()
        if not len(idx):
            continue
        top = store.top_var(g)
        if top is None:
            out[idx] = store.value(g)
            continue
        k = bit_of[top.index]
        on = (idx >> k) & 1 == 1
        stack.append((store.then_child(g), idx[on]))
        stack.append((store.else_child(g), idx[~on]))
    return out


@dataclass
class FlatMdp:
    n: int
    actions: list[str]
    transitions: dict[str, sp.csr_matrix]
    reward: np.ndarray
    discount: float

    @property
    def states(self) -> int:
        return 1 << self.n


def transition_prob(spec: MdpSpec, s: int, a: str, t: int) -> float:
    """``Pr(t | s, a)`` as a product of independent per-variable outcomes."""
    store = spec.store
    x = assignment(spec.variables, s)
    p = 1.0
    for k, v in enumerate(spec.variables):
        q = store.evaluate(spec.actions[a].cpts[v], x)
        p *= q if t >> k & 1 else 1.0 - q
    return p


def _transition_matrix(probs: np.ndarray) -> sp.csr_matrix:
    """Sparse ``Pr(t | s)`` from the per-variable probabilities ``probs[k, s]``.

    Only variables whose outcome is uncertain at ``s`` spawn extra successors.
    """
    n, count = probs.shape
    rows = np.arange(count, dtype=np.int64)
    cols = np.zeros(count, dtype=np.int64)
    weight = np.ones(count)
    for k in range(n):
        bit = np.int64(1 << k)
        p = probs[k][rows]
        certain = p == 1.0
        split = (p > 0.0) & (p < 1.0)
        cols = np.where(certain, cols | bit, cols)
        new_rows, new_cols, new_w = rows[split], cols[split] | bit, weight[split] * p[split]
        weight = np.where(split, weight * (1.0 - p), weight)
        rows = np.concatenate([rows, new_rows])
        cols = np.concatenate([cols, new_cols])
        weight = np.concatenate([weight, new_w])
    return sp.csr_matrix((weight, (rows, cols)), shape=(count, count))


def from_spec(spec: MdpSpec, max_states: int = DEFAULT_MAX_STATES) -> FlatMdp:
    n = len(spec.variables)
    if 1 << n > max_states:
        raise StateSpaceTooLarge(f"{1 << n} states exceed the limit of {max_states}")
    store = spec.store
    transitions = {}
    for name, action in spec.actions.items():
        probs = np.array([table(store, action.cpts[v], spec.variables) for v in spec.variables])
        transitions[name] = _transition_matrix(probs.reshape(n, 1 << n))
    reward = table(store, spec.reward, spec.variables)
    return FlatMdp(n, list(spec.actions), transitions, reward, spec.discount)


@dataclass
class FlatResult:
    values: np.ndarray
    iterations: int
    deltas: list[float]
    converged: bool
    policy: list[tuple[str, ...]]


def q_values(flat: FlatMdp, v: np.ndarray) -> np.ndarray:
    return np.array([flat.reward + flat.discount * (flat.transitions[a] @ v) for a in flat.actions])


def optimal_actions(flat: FlatMdp, v: np.ndarray) -> list[tuple[str, ...]]:
    q = q_values(flat, v)
    best = q.max(axis=0)
    ok = q >= best - tie_tolerance(best)
    return [tuple(sorted(flat.actions[a] for a in np.flatnonzero(ok[:, s]))) for s in range(flat.states)]


def flat_value_iteration(
    flat: FlatMdp,
    epsilon: float = 0.01,
    max_iterations: int = 100_000,
    progress: Callable[[int, float], None] | None = None,
) -> FlatResult:
    """Value iteration over the explicit state space; ``progress(iteration, delta)`` is optional."""
    threshold = stopping_threshold(epsilon, flat.discount)
    v = flat.reward.copy()
    deltas = []
    converged = False
    for _ in range(max_iterations):
        new = q_values(flat, v).max(axis=0)
        delta = float(np.max(np.abs(new - v)))
        deltas.append(delta)
        v = new
        if progress is not None:
            progress(len(deltas), delta)
        if delta < threshold or (threshold == 0 and delta == 0):
            converged = True
            break
    return FlatResult(v, len(deltas), deltas, converged, optimal_actions(flat, v))


def compare(store: DiagramStore, v_diagram: DiagramRef, v_flat: np.ndarray, variables: list[VarId]) -> float:
    return float(np.max(np.abs(table(store, v_diagram, variables) - v_flat)))
