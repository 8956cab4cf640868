"""Value iteration over ADD value functions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .add import DiagramError, DiagramRef, DiagramStore, frac_bits
from .model import ActionPartition, ActionSpec, MdpSpec, build_partitions

log = logging.getLogger(__name__)


def stopping_threshold(epsilon: float, discount: float) -> float:
    """Sup-norm change below which the current iterate is ``epsilon / 2`` optimal.

    With no discounting the first backup is already exact, so only a zero
    change counts as converged.
    """
    if discount == 0:
        return 0.0
    return epsilon * (1 - discount) / (2 * discount)


def tie_tolerance(best: float) -> float:
    return 1e-9 * (1 + abs(best))


@dataclass
class SolveConfig:
    epsilon: float = 0.01
    node_limit: float = math.inf
    max_iterations: int = 100_000
    # scratch store is rebuilt from the live diagrams once it holds this many nodes,
    # or four times the live size after the previous rebuild if that is larger
    compact_nodes: int = 30_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.node_limit >= 1:
            raise ValueError("node_limit must be at least 1")


@dataclass
class IterationStats:
    iteration: int
    internal_nodes: int
    leaves: int
    delta: float


@dataclass
class SolveResult:
    value: DiagramRef
    iterations: int
    history: list[IterationStats]
    converged: bool
    threshold: float

    @property
    def deltas(self) -> list[float]:
        return [h.delta for h in self.history]


@dataclass
class Policy:
    """Diagram mapping states to indices of ``actions``, the interned optimal-action sets."""

    diagram: DiagramRef
    actions: list[tuple[str, ...]] = field(default_factory=list)

    def at(self, store: DiagramStore, assignment) -> tuple[str, ...]:
        return self.actions[store.evaluate(self.diagram, assignment)]

    def label(self, index: int) -> str:
        return ",".join(self.actions[index])


def regress(store: DiagramStore, v_primed: DiagramRef, partition: ActionPartition) -> DiagramRef:
    """Expected value of ``v_primed`` after one step of the partitioned action.

    Blocks are handled deepest first: each block's complete diagram is
    multiplied in and its post-action variables summed out before the next
    block.  All arithmetic is exact (integers scaled by a power of two) and
    rounded once at the end, so the result does not depend on how the
    variables were blocked.
    """
    for v in store.support(v_primed):
        if not v.primed:
            raise DiagramError(f"value diagram mentions current-state variable {store.name_of(v)}")
    w, bits = _fixed(store, v_primed)
    return _regress_fixed(store, w, bits, partition)


def _fixed(store: DiagramStore, f: DiagramRef) -> tuple[DiagramRef, int]:
    bits = max(frac_bits(x) for x in store.terminal_values(f))
    return store.to_fixed(f, bits), bits


def _regress_fixed(store: DiagramStore, w: DiagramRef, bits: int, partition: ActionPartition) -> DiagramRef:
    for i in reversed(range(len(partition.blocks))):
        primed = [store.primed(v) for v in partition.blocks[i]]
        w = store.product_sum_out(w, partition.complete[i], primed)
        bits += partition.block_bits(i)
    return store.from_fixed(w, bits)


def bellman_backup(
    store: DiagramStore,
    mdp: MdpSpec,
    action: str,
    v: DiagramRef,
    partition: ActionPartition | None = None,
) -> DiagramRef:
    """``R + discount * E[v(next state)]`` under ``action``."""
    if partition is None:
        partition = build_partitions(store, mdp.actions[action])
    future = regress(store, store.swap_primed(v), partition)
    return store.apply("add", mdp.reward, store.scale(future, mdp.discount))


class _Workspace:
    """Private store holding the reward, partitions and current iterate of one solve."""

    def __init__(self, mdp: MdpSpec, config: SolveConfig):
        self.mdp = mdp
        self.config = config
        self.store = DiagramStore()
        memo: dict = {}
        self.reward = self.store.transfer(mdp.reward, memo)
        self.partitions: dict[str, ActionPartition] = {}
        for name, action in mdp.actions.items():
            local = ActionSpec({v: self.store.transfer(c, memo) for v, c in action.cpts.items()})
            self.partitions[name] = build_partitions(self.store, local, config.node_limit)

    def backup_all(self, v: DiagramRef) -> dict[str, DiagramRef]:
        store = self.store
        # the fixed-point form of the next-state value is shared by every action
        w, bits = _fixed(store, store.swap_primed(v))
        out = {}
        for name, part in self.partitions.items():
            future = _regress_fixed(store, w, bits, part)
            out[name] = store.apply("add", self.reward, store.scale(future, self.mdp.discount))
        return out

    def compact(self, v: DiagramRef, capacity: int = 1024) -> DiagramRef:
        fresh = DiagramStore(capacity=capacity)
        memo: dict = {}
        self.reward = fresh.transfer(self.reward, memo)
        for part in self.partitions.values():
            part.complete = [fresh.transfer(c, memo) for c in part.complete]
            part.duals = []
        v = fresh.transfer(v, memo)
        self.store = fresh
        return v


def value_iteration(
    store: DiagramStore,
    mdp: MdpSpec,
    config: SolveConfig | None = None,
    progress: Callable[[IterationStats], None] | None = None,
) -> SolveResult:
    """Iterate Bellman backups from ``V0 = R`` until the sup-norm change is small enough.

    The returned value diagram lives in ``store``.  ``progress`` is called
    with the statistics of every iteration.
    """
    config = config or SolveConfig()
    threshold = stopping_threshold(config.epsilon, mdp.discount)
    work = _Workspace(mdp, config)
    v = work.reward
    live = len(work.store)
    history: list[IterationStats] = []
    converged = False
    for i in range(1, config.max_iterations + 1):
        backups = work.backup_all(v)
        new = None
        for va in backups.values():
            new = va if new is None else work.store.apply("max", new, va)
        delta = work.store.sup_norm_diff(new, v)
        v = new
        st = work.store.stats(v)
        h = IterationStats(i, st["internal_nodes"], st["leaves"], delta)
        history.append(h)
        if progress is not None:
            progress(h)
        if delta < threshold or (threshold == 0 and delta == 0):
            converged = True
            break
        if len(work.store) > max(config.compact_nodes, 4 * live):
            v = work.compact(v, max(config.compact_nodes, 4 * live))
            live = len(work.store)
    log.debug("value iteration stopped after %d iterations (converged=%s)", len(history), converged)
    return SolveResult(store.transfer(v), len(history), history, converged, threshold)


def extract_policy(
    store: DiagramStore,
    mdp: MdpSpec,
    v: DiagramRef,
    config: SolveConfig | None = None,
    partitions: Mapping[str, ActionPartition] | None = None,
) -> Policy:
    """One more backup per action; each state gets every action within tie tolerance of the best."""
    config = config or SolveConfig()
    names = list(mdp.actions)
    backups = []
    for name in names:
        part = partitions[name] if partitions else build_partitions(store, mdp.actions[name], config.node_limit)
        backups.append(bellman_backup(store, mdp, name, v, part))
    best = backups[0]
    for va in backups[1:]:
        best = store.apply("max", best, va)

    mask = store.mk_int(0)
    for bit, va in enumerate(backups):
        def optimal(x, m, bit=bit):
            return 1 << bit if x >= m - tie_tolerance(m) else 0

        ind = store.apply_fn(("optimal", bit), optimal, va, best)
        mask = store.apply("add", mask, ind)

    masks = sorted(set(store.terminal_values(mask)))
    sets = sorted({tuple(sorted(names[b] for b in range(len(names)) if m >> b & 1)) for m in masks})
    index = {s: i for i, s in enumerate(sets)}
    lookup = {m: index[tuple(sorted(names[b] for b in range(len(names)) if m >> b & 1))] for m in masks}
    diagram = store.map_terminals(("intern", tuple(sorted(lookup.items()))), lookup.__getitem__, mask)
    return Policy(diagram, sets)
