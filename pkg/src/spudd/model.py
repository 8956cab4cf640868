"""Factored MDPs whose CPTs and reward are ADDs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .add import DiagramError, DiagramRef, DiagramStore, VarId, frac_bits


@dataclass
class ActionSpec:
    """Per-variable CPTs ``P(X' = true | X)`` keyed by the unprimed variable."""

    cpts: dict[VarId, DiagramRef]


@dataclass
class MdpSpec:
    store: DiagramStore
    variables: list[VarId]
    actions: dict[str, ActionSpec]
    reward: DiagramRef
    discount: float

    @property
    def names(self) -> list[str]:
        return [self.store.name_of(v) for v in self.variables]


@dataclass(frozen=True)
class DualActionDiagram:
    """``X' ? CPT : 1 - CPT``, i.e. ``P(X' = x' | X)``.

    Under the interleaved ordering the CPT may test variables below ``X'``,
    so ``X'`` is not always the root.
    """

    var: VarId
    diagram: DiagramRef


@dataclass
class ActionPartition:
    """Consecutive variable blocks of one action with their joint transition diagrams.

    ``complete[i]`` is the product of the dual diagrams of ``blocks[i]`` in
    exact fixed point: every dual diagram is scaled by ``2**frac_bits`` before
    multiplying, so a terminal ``m`` of block ``i`` stands for the probability
    ``m / 2**(frac_bits * len(blocks[i]))``.
    """

    blocks: list[list[VarId]]
    complete: list[DiagramRef]
    frac_bits: int
    node_limit: float = math.inf
    duals: list[DualActionDiagram] = field(default_factory=list, repr=False)

    def block_bits(self, i: int) -> int:
        return self.frac_bits * len(self.blocks[i])

    def probabilities(self, store: DiagramStore, i: int) -> DiagramRef:
        """Float view of block ``i``'s complete diagram."""
        return store.from_fixed(self.complete[i], self.block_bits(i))


def persistence(store: DiagramStore, var: VarId) -> DiagramRef:
    """CPT that keeps ``var`` at its current value."""
    return store.indicator(var)


def _check_cpt(store: DiagramStore, cpt: DiagramRef) -> None:
    for v in store.support(cpt):
        if v.primed:
            raise DiagramError(f"CPT mentions post-action variable {store.name_of(v)}")
    for x in store.terminal_values(cpt):
        if not 0.0 <= x <= 1.0:
            raise DiagramError(f"CPT probability {x!r} outside [0, 1]")


def build_dual_diagram(store: DiagramStore, cpt: DiagramRef, base_var: VarId) -> DualActionDiagram:
    _check_cpt(store, cpt)
    primed = store.primed(base_var)
    return DualActionDiagram(primed, store.branch(primed, cpt, store.complement_one(cpt)))


def build_partitions(
    store: DiagramStore, action: ActionSpec, node_limit: float = math.inf
) -> ActionPartition:
    """Group the action's dual diagrams into blocks of bounded product size.

    Dual diagrams are multiplied in variable order into the current block
    until the running product would exceed ``node_limit`` internal nodes;
    the block is then closed and the next one started.  A block always holds
    at least one variable.
    """
    if node_limit < 1:
        raise ValueError("node_limit must be at least 1")
    variables = sorted(action.cpts, key=lambda v: v.index)
    duals = [build_dual_diagram(store, action.cpts[v], v) for v in variables]
    bits = max(
        (frac_bits(x) for d in duals for x in store.terminal_values(d.diagram)),
        default=0,
    )
    fixed = [store.to_fixed(d.diagram, bits) for d in duals]

    blocks: list[list[VarId]] = []
    complete: list[DiagramRef] = []
    current: list[VarId] = []
    running = None
    for v, q in zip(variables, fixed):
        if running is None:
            current, running = [v], q
            continue
        candidate = store.apply("multiply", running, q)
        if store.stats(candidate)["internal_nodes"] > node_limit:
            blocks.append(current)
            complete.append(running)
            current, running = [v], q
        else:
            current.append(v)
            running = candidate
    if running is not None:
        blocks.append(current)
        complete.append(running)
    return ActionPartition(blocks, complete, bits, node_limit, duals)


def validate(spec: MdpSpec) -> list[str]:
    """Problems with the model ``spec``; an empty list means it is usable."""
    store = spec.store
    issues: list[str] = []
    if not (isinstance(spec.discount, (int, float)) and 0.0 <= spec.discount < 1.0):
        issues.append(f"discount {spec.discount!r} outside [0, 1)")
    if not spec.actions:
        issues.append("no actions")
    for x in store.terminal_values(spec.reward):
        if not math.isfinite(x):
            issues.append(f"non-finite reward {x!r}")
    for v in store.support(spec.reward):
        if v.primed:
            issues.append(f"reward mentions post-action variable {store.name_of(v)}")
    for name, action in spec.actions.items():
        for v in spec.variables:
            if v not in action.cpts:
                issues.append(f"action {name}: missing CPT for {store.name_of(v)}")
        for v, cpt in action.cpts.items():
            if v not in spec.variables:
                issues.append(f"action {name}: CPT for undeclared variable {v}")
                continue
            for x in store.terminal_values(cpt):
                if not 0.0 <= x <= 1.0:
                    issues.append(f"action {name}: CPT for {store.name_of(v)} has probability {x!r} outside [0, 1]")
            for u in store.support(cpt):
                if u.primed:
                    issues.append(f"action {name}: CPT for {store.name_of(v)} mentions {store.name_of(u)}")
    return issues
