"""Reduced ordered algebraic decision diagrams over boolean variables.

All diagrams live in a :class:`DiagramStore`, which owns the unique table,
the operation cache and the variable ordering.  Node storage and the
recursive operations live in a kernel (compiled when available, pure Python
otherwise).  Callers only ever see :class:`DiagramRef` handles, so two
handles compare equal exactly when they denote the same function.

Every declared variable ``X`` gets a primed twin ``X'`` placed immediately
after it in the ordering, i.e. ``X`` sits at level ``2k`` and ``X'`` at
``2k + 1``.  Swapping primed and unprimed labels is then a level flip
(``level ^ 1``) that never reorders a path.

Terminals come in two kinds that never mix inside one diagram: ordinary
float terminals (``mk_terminal``) and integer terminals (``mk_int``).  The
integer kind carries exact fixed-point values during regression and interned
indices in policy diagrams.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from . import _pykernel
from ._errors import DiagramError, OrderingError, StoreMismatchError

try:
    from . import _kernel as _ckernel
except ImportError:  # extension not built
    _ckernel = None

TERMINAL_LEVEL = _pykernel.TERMINAL_LEVEL

__all__ = [
    "DiagramError",
    "DiagramRef",
    "DiagramStore",
    "OrderingError",
    "StoreMismatchError",
    "VarId",
    "compiled_kernel_available",
    "fold",
    "frac_bits",
    "max_abs",
]


def compiled_kernel_available() -> bool:
    return _ckernel is not None


def _default_kernel():
    if _ckernel is not None and not os.environ.get("SPUDD_PURE_PYTHON"):
        return _ckernel.Kernel
    return _pykernel.Kernel


@dataclass(frozen=True)
class VarId:
    index: int
    primed: bool
    base: int


@dataclass(frozen=True, eq=True)
class DiagramRef:
    store: "DiagramStore"
    node: int

    def __repr__(self) -> str:
        return f"DiagramRef({self.node})"


_OPS = {
    "add": _pykernel.ADD,
    "multiply": _pykernel.MUL,
    "max": _pykernel.MAX,
    "min": _pykernel.MIN,
    "subtract": _pykernel.SUB,
}


def frac_bits(x: float) -> int:
    """Number of binary digits after the point needed to write ``x`` exactly."""
    return x.as_integer_ratio()[1].bit_length() - 1


class DiagramStore:
    """Unique table, memo cache and variable registry for a family of ADDs.

    ``cache_limit`` caps the operation cache; once exceeded, the oldest
    entries are dropped.  ``kernel`` selects the node kernel class and
    defaults to the compiled one when it is available.  ``capacity`` is the
    expected node count, used to pre-size tables.
    """

    def __init__(self, cache_limit: int | None = None, kernel=None, capacity: int = 1024):
        self._k = (kernel or _default_kernel())(cache_limit, capacity)
        self._names: list[str] = []
        self._by_name: dict[str, int] = {}

    @property
    def cache_limit(self) -> int | None:
        return self._k.cache_limit

    @cache_limit.setter
    def cache_limit(self, value: int | None) -> None:
        self._k.cache_limit = value

    @property
    def kernel_name(self) -> str:
        """``"compiled"`` or ``"python"``."""
        return "python" if isinstance(self._k, _pykernel.Kernel) else "compiled"

    # ------------------------------------------------------------------
    # variables

    def declare(self, *names: str) -> list[VarId]:
        out = []
        for name in names:
            if name in self._by_name:
                raise DiagramError(f"variable {name!r} already declared")
            if not name or "'" in name:
                raise DiagramError(f"bad variable name {name!r}")
            k = len(self._names)
            self._names.append(name)
            self._by_name[name] = k
            out.append(VarId(2 * k, False, 2 * k))
        return out

    def var(self, name: str) -> VarId:
        """Look up a variable by name; a trailing ``'`` selects the primed copy."""
        primed = name.endswith("'")
        base = name[:-1] if primed else name
        try:
            k = self._by_name[base]
        except KeyError:
            raise DiagramError(f"unknown variable {name!r}") from None
        return VarId(2 * k + primed, primed, 2 * k)

    @property
    def variables(self) -> list[VarId]:
        """Unprimed variables in ordering position."""
        return [VarId(2 * k, False, 2 * k) for k in range(len(self._names))]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def primed(self, v: VarId) -> VarId:
        return VarId(v.base + 1, True, v.base)

    def unprimed(self, v: VarId) -> VarId:
        return VarId(v.base, False, v.base)

    def name_of(self, v: VarId) -> str:
        return self._names[v.base // 2] + ("'" if v.primed else "")

    def _var_at(self, level: int) -> VarId:
        return VarId(level, bool(level & 1), level & ~1)

    def _check_var(self, v: VarId) -> int:
        if (
            not isinstance(v, VarId)
            or v.index < 0
            or v.index >> 1 >= len(self._names)
            or v.index & ~1 != v.base
            or bool(v.index & 1) != v.primed
        ):
            raise DiagramError(f"{v} is not a variable of this store")
        return v.index

    # ------------------------------------------------------------------
    # node construction

    def __len__(self) -> int:
        return len(self._k)

    def _ref(self, node: int) -> DiagramRef:
        return DiagramRef(self, node)

    def _node(self, f: DiagramRef) -> int:
        if not isinstance(f, DiagramRef):
            raise TypeError(f"expected DiagramRef, got {type(f).__name__}")
        if f.store is not self:
            raise StoreMismatchError("diagram belongs to a different store")
        return f.node

    def _done(self, node: int) -> DiagramRef:
        self._k.trim_cache()
        return DiagramRef(self, node)

    def mk_terminal(self, value: float) -> DiagramRef:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"terminal value must be real, got {value!r}")
        return self._ref(self._k.term(float(value)))

    def mk_int(self, value: int) -> DiagramRef:
        """Integer-valued terminal (exact arithmetic, policy indices)."""
        if type(value) is not int:
            raise TypeError(f"integer terminal must be int, got {value!r}")
        return self._ref(self._k.term(value))

    def mk_internal(self, var: VarId, then_child: DiagramRef, else_child: DiagramRef) -> DiagramRef:
        level = self._check_var(var)
        hi, lo = self._node(then_child), self._node(else_child)
        if hi == lo:
            return then_child
        k = self._k
        if k.level(hi) <= level or k.level(lo) <= level:
            raise OrderingError(f"{self.name_of(var)} does not precede the roots of its children", level)
        return self._ref(k.mk(level, hi, lo))

    def indicator(self, var: VarId) -> DiagramRef:
        """The 0/1 diagram that is 1 exactly when ``var`` is true."""
        return self.mk_internal(var, self.mk_terminal(1.0), self.mk_terminal(0.0))

    def branch(self, var: VarId, then_child: DiagramRef, else_child: DiagramRef) -> DiagramRef:
        """``var ? then_child : else_child`` for children in any order.

        Unlike :meth:`mk_internal` the children may mention variables above
        ``var`` or ``var`` itself; the result is rebuilt in canonical order.
        """
        level = self._check_var(var)
        hi, lo = self._node(then_child), self._node(else_child)
        return self._done(self._k.branch(level, hi, lo))

    def clear_cache(self) -> None:
        self._k.clear_cache()

    def cache_size(self) -> int:
        return self._k.cache_size()

    # ------------------------------------------------------------------
    # binary operations

    def apply(self, op: str, f: DiagramRef, g: DiagramRef) -> DiagramRef:
        try:
            code = _OPS[op]
        except KeyError:
            raise DiagramError(f"unknown operation {op!r}") from None
        return self._done(self._k.apply(code, self._node(f), self._node(g)))

    def apply_fn(self, tag, fn: Callable, f: DiagramRef, g: DiagramRef) -> DiagramRef:
        """Pointwise ``fn`` over two diagrams.

        ``tag`` keys the memo cache and must identify ``fn`` uniquely within
        this store.
        """
        return self._done(self._k.apply_fn(tag, fn, self._node(f), self._node(g)))

    def map_terminals(self, tag, fn: Callable, f: DiagramRef) -> DiagramRef:
        """Apply ``fn`` to every terminal of ``f``; ``tag`` keys the memo cache."""
        return self._done(self._k.map(tag, fn, self._node(f)))

    def product_sum_out(self, f: DiagramRef, g: DiagramRef, variables: Iterable[VarId]) -> DiagramRef:
        """``sum_out`` of every variable in ``variables`` from ``f * g``.

        Computed in one pass without building the full product.  Each
        variable is summed out right where it is split on, so the deepest
        variables are eliminated first.
        """
        cube = tuple(sorted({self._check_var(v) for v in variables}))
        return self._done(self._k.product_sum(self._node(f), self._node(g), cube))

    # ------------------------------------------------------------------
    # unary operations

    def scale(self, f: DiagramRef, c: float) -> DiagramRef:
        c = float(c)
        if not math.isfinite(c):
            raise DiagramError(f"non-finite scale factor {c!r}")
        n = self._node(f)
        if c == 1.0:
            return f
        return self._done(self._k.map(("scale", c), lambda x: x * c, n))

    def complement_one(self, f: DiagramRef) -> DiagramRef:
        return self._done(self._k.map("complement", lambda x: 1.0 - x, self._node(f)))

    def restrict(self, f: DiagramRef, var: VarId, val: bool) -> DiagramRef:
        level = self._check_var(var)
        return self._done(self._k.restrict(self._node(f), level, bool(val)))

    def sum_out(self, f: DiagramRef, var: VarId) -> DiagramRef:
        level = self._check_var(var)
        n = self._node(f)
        k = self._k
        return self._done(k.apply(_pykernel.ADD, k.restrict(n, level, True), k.restrict(n, level, False)))

    def swap_primed(self, f: DiagramRef) -> DiagramRef:
        """Exchange every variable with its primed/unprimed counterpart."""
        try:
            r = self._k.swap(self._node(f))
        except OrderingError as exc:
            name = self._names[exc.level >> 1]
            raise OrderingError(f"cannot swap: {name} and {name}' both occur on one path", exc.level) from None
        return self._done(r)

    def to_fixed(self, f: DiagramRef, bits: int) -> DiagramRef:
        """Exact integer diagram holding ``f * 2**bits``.

        Raises if some terminal needs more than ``bits`` fractional bits.
        """
        def conv(x: float) -> int:
            num, den = x.as_integer_ratio()
            k = den.bit_length() - 1
            if k > bits:
                raise DiagramError(f"{x!r} is not a multiple of 2**-{bits}")
            return num << (bits - k)

        return self._done(self._k.map(("to_fixed", bits), conv, self._node(f)))

    def from_fixed(self, f: DiagramRef, bits: int) -> DiagramRef:
        """Correctly rounded float diagram of ``f / 2**bits``."""
        denom = 1 << bits
        return self._done(self._k.map(("from_fixed", bits), lambda m: m / denom, self._node(f)))

    # ------------------------------------------------------------------
    # queries

    def is_terminal(self, f: DiagramRef) -> bool:
        return self._k.level(self._node(f)) == TERMINAL_LEVEL

    def value(self, f: DiagramRef):
        n = self._node(f)
        if self._k.level(n) != TERMINAL_LEVEL:
            raise DiagramError("not a terminal")
        return self._k.value(n)

    def top_var(self, f: DiagramRef) -> VarId | None:
        level = self._k.level(self._node(f))
        return None if level == TERMINAL_LEVEL else self._var_at(level)

    def then_child(self, f: DiagramRef) -> DiagramRef:
        n = self._node(f)
        if self._k.level(n) == TERMINAL_LEVEL:
            raise DiagramError("a terminal has no children")
        return self._ref(self._k.hi(n))

    def else_child(self, f: DiagramRef) -> DiagramRef:
        n = self._node(f)
        if self._k.level(n) == TERMINAL_LEVEL:
            raise DiagramError("a terminal has no children")
        return self._ref(self._k.lo(n))

    def evaluate(self, f: DiagramRef, assignment: Mapping[VarId, bool]):
        n = self._node(f)
        k = self._k
        by_level = {v.index: bool(b) for v, b in assignment.items()}
        level = k.level(n)
        while level != TERMINAL_LEVEL:
            try:
                bit = by_level[level]
            except KeyError:
                raise DiagramError(f"assignment does not cover {self.name_of(self._var_at(level))}") from None
            n = k.hi(n) if bit else k.lo(n)
            level = k.level(n)
        return k.value(n)

    def _reachable(self, f: int) -> list[int]:
        """Nodes reachable from ``f`` in depth-first preorder (then before else)."""
        return self._k.reachable(f)

    def support(self, f: DiagramRef) -> list[VarId]:
        level = self._k.level
        levels = {level(n) for n in self._reachable(self._node(f))}
        levels.discard(TERMINAL_LEVEL)
        return [self._var_at(lvl) for lvl in sorted(levels)]

    def terminal_values(self, f: DiagramRef) -> list:
        k = self._k
        return sorted(k.value(n) for n in self._reachable(self._node(f)) if k.level(n) == TERMINAL_LEVEL)

    def sup_norm_diff(self, f: DiagramRef, g: DiagramRef) -> float:
        return max_abs(self, self.apply("subtract", f, g))

    def stats(self, f: DiagramRef) -> dict[str, int]:
        """Internal nodes, distinct leaves and equivalent tree leaves of ``f``.

        ``equivalent_tree_leaves`` is the number of root-to-terminal paths,
        i.e. the leaf count of the decision tree obtained by unsharing ``f``.
        """
        k = self._k
        nodes = self._reachable(self._node(f))
        paths: dict[int, int] = {}
        internal = leaves = 0
        for n in sorted(nodes, key=k.level, reverse=True):
            if k.level(n) == TERMINAL_LEVEL:
                leaves += 1
                paths[n] = 1
            else:
                internal += 1
                paths[n] = paths[k.hi(n)] + paths[k.lo(n)]
        return {
            "internal_nodes": internal,
            "leaves": leaves,
            "equivalent_tree_leaves": paths[nodes[0]],
        }

    # ------------------------------------------------------------------
    # conversion

    def transfer(self, f: DiagramRef, memo: dict | None = None) -> DiagramRef:
        """Copy a diagram from another store with a compatible variable list."""
        src = f.store
        if src is self:
            return f
        if src._names[: len(self._names)] != self._names[: len(src._names)]:
            raise StoreMismatchError("stores declare different variables")
        for name in src._names[len(self._names):]:
            self.declare(name)
        memo = {} if memo is None else memo
        sk, k = src._k, self._k
        if type(sk) is type(k) and hasattr(k, "import_nodes"):
            return self._ref(k.import_nodes(sk, [f.node], memo)[0])
        for n in sorted(sk.reachable(f.node), key=sk.level, reverse=True):
            if n in memo:
                continue
            level = sk.level(n)
            if level == TERMINAL_LEVEL:
                memo[n] = k.term(sk.value(n))
            else:
                memo[n] = k.mk(level, memo[sk.hi(n)], memo[sk.lo(n)])
        return self._ref(memo[f.node])

    def from_table(self, values: Sequence[float], variables: Sequence[VarId]) -> DiagramRef:
        """Diagram for a table indexed by ``sum(bit_i << i)`` over ``variables``."""
        n = len(variables)
        if len(values) != 1 << n:
            raise DiagramError(f"table of length {len(values)} does not match {n} variables")
        order = sorted(range(n), key=lambda i: variables[i].index)
        levels = [self._check_var(variables[i]) for i in order]
        if len(set(levels)) != n:
            raise DiagramError("table variables must be distinct")
        k = self._k

        def rec(depth: int, offset: int) -> int:
            if depth == n:
                return k.term(float(values[offset]))
            bit = 1 << order[depth]
            return k.mk(levels[depth], rec(depth + 1, offset | bit), rec(depth + 1, offset))

        return self._ref(rec(0, 0))

    def to_dot(self, f: DiagramRef, labels: Callable[[object], str] | None = None) -> str:
        """Deterministic Graphviz rendering of ``f``.

        Solid edges lead to the then-child, dashed edges to the else-child and
        terminals are boxes.  ``labels`` formats terminal values.
        """
        k = self._k
        nodes = self._reachable(self._node(f))
        ids = {n: i for i, n in enumerate(nodes)}
        fmt = labels or repr
        lines = ["digraph add {"]
        for n in nodes:
            if k.level(n) == TERMINAL_LEVEL:
                text = _dot_escape(fmt(k.value(n)))
                lines.append(f'  n{ids[n]} [label="{text}", shape=box];')
            else:
                name = _dot_escape(self.name_of(self._var_at(k.level(n))))
                lines.append(f'  n{ids[n]} [label="{name}", shape=ellipse];')
                lines.append(f"  n{ids[n]} -> n{ids[k.hi(n)]} [style=solid];")
                lines.append(f"  n{ids[n]} -> n{ids[k.lo(n)]} [style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def max_abs(store: DiagramStore, f: DiagramRef) -> float:
    return max(abs(x) for x in store.terminal_values(f))


def fold(store: DiagramStore, op: str, diagrams: Iterable[DiagramRef]) -> DiagramRef:
    it = iter(diagrams)
    acc = next(it)
    for d in it:
        acc = store.apply(op, acc, d)
    return acc
