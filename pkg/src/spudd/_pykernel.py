"""Pure-Python node kernel: unique table, memo cache and the recursive operations.

Nodes are integers.  Terminals sit at ``TERMINAL_LEVEL``; an internal node
``n`` tests the variable at ``level(n)`` and continues to ``hi(n)`` when it
is true, ``lo(n)`` otherwise.  The compiled kernel in ``_kernel.pyx`` has the
same interface and must agree with this one node for node.
"""

from __future__ import annotations

import math
from itertools import islice

from ._errors import DiagramError, OrderingError

TERMINAL_LEVEL = 1 << 30

ADD, MUL, MAX, MIN, SUB = range(5)
_COMMUTATIVE = (True, True, True, True, False)


def _max(a, b):
    return b if b > a else a


def _min(a, b):
    return b if b < a else a


_FN = (
    lambda a, b: a + b,
    lambda a, b: a * b,
    _max,
    _min,
    lambda a, b: a - b,
)


class Kernel:
    def __init__(self, cache_limit: int | None = None, capacity: int = 1024):
        # capacity is a sizing hint for the compiled kernel; lists grow on demand here
        self.cache_limit = cache_limit
        self._level: list[int] = []
        self._hi: list[int] = []
        self._lo: list[int] = []
        self._value: list = []
        self._unique: dict[tuple[int, int, int], int] = {}
        self._floats: dict[float, int] = {}
        self._ints: dict[int, int] = {}
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self._level)

    def level(self, n: int) -> int:
        return self._level[n]

    def hi(self, n: int) -> int:
        return self._hi[n]

    def lo(self, n: int) -> int:
        return self._lo[n]

    def value(self, n: int):
        return self._value[n]

    # ------------------------------------------------------------------
    # construction

    def _new(self, level: int, hi: int, lo: int, value) -> int:
        r = len(self._level)
        self._level.append(level)
        self._hi.append(hi)
        self._lo.append(lo)
        self._value.append(value)
        return r

    def term(self, value) -> int:
        if type(value) is int:
            r = self._ints.get(value)
            if r is None:
                r = self._ints[value] = self._new(TERMINAL_LEVEL, -1, -1, value)
            return r
        r = self._floats.get(value)
        if r is None:
            value = float(value)
            if not math.isfinite(value):
                raise DiagramError(f"non-finite terminal value {value!r}")
            # 0.0 and -0.0 share one key; keep the positive zero
            value += 0.0
            r = self._floats[value] = self._new(TERMINAL_LEVEL, -1, -1, value)
        return r

    def mk(self, level: int, hi: int, lo: int) -> int:
        if hi == lo:
            return hi
        key = (level, hi, lo)
        r = self._unique.get(key)
        if r is None:
            r = self._unique[key] = self._new(level, hi, lo, None)
        return r

    # ------------------------------------------------------------------
    # cache

    def cache_size(self) -> int:
        return len(self._cache)

    def clear_cache(self) -> None:
        self._cache.clear()

    def trim_cache(self) -> None:
        limit = self.cache_limit
        cache = self._cache
        if limit is not None and len(cache) > limit:
            for key in list(islice(cache, len(cache) - limit // 2)):
                del cache[key]

    # ------------------------------------------------------------------
    # operations

    def apply(self, op: int, f: int, g: int) -> int:
        fn = _FN[op]
        commutative = _COMMUTATIVE[op]
        level, hi, lo, value = self._level, self._hi, self._lo, self._value
        cache, mk, term = self._cache, self.mk, self.term
        T = TERMINAL_LEVEL

        def rec(f: int, g: int) -> int:
            if commutative and f > g:
                f, g = g, f
            lf, lg = level[f], level[g]
            if lf == T and lg == T:
                return term(fn(value[f], value[g]))
            if op == ADD:
                if lf == T and value[f] == 0:
                    return g
                if lg == T and value[g] == 0:
                    return f
            elif op == MUL:
                if lf == T:
                    if value[f] == 0:
                        return f
                    if value[f] == 1:
                        return g
                if lg == T:
                    if value[g] == 0:
                        return g
                    if value[g] == 1:
                        return f
            elif op == SUB:
                if lg == T and value[g] == 0:
                    return f
            elif f == g:
                return f
            key = (op, f, g)
            r = cache.get(key)
            if r is None:
                if lf == lg:
                    r = mk(lf, rec(hi[f], hi[g]), rec(lo[f], lo[g]))
                elif lf < lg:
                    r = mk(lf, rec(hi[f], g), rec(lo[f], g))
                else:
                    r = mk(lg, rec(f, hi[g]), rec(f, lo[g]))
                cache[key] = r
            return r

        return rec(f, g)

    def apply_fn(self, tag, fn, f: int, g: int) -> int:
        level, hi, lo, value = self._level, self._hi, self._lo, self._value
        cache, mk, term = self._cache, self.mk, self.term
        T = TERMINAL_LEVEL

        def rec(f: int, g: int) -> int:
            key = (tag, f, g)
            r = cache.get(key)
            if r is None:
                lf, lg = level[f], level[g]
                if lf == T and lg == T:
                    r = term(fn(value[f], value[g]))
                elif lf == lg:
                    r = mk(lf, rec(hi[f], hi[g]), rec(lo[f], lo[g]))
                elif lf < lg:
                    r = mk(lf, rec(hi[f], g), rec(lo[f], g))
                else:
                    r = mk(lg, rec(f, hi[g]), rec(f, lo[g]))
                cache[key] = r
            return r

        return rec(f, g)

    def map(self, tag, fn, f: int) -> int:
        level, hi, lo, value = self._level, self._hi, self._lo, self._value
        cache, mk, term = self._cache, self.mk, self.term
        T = TERMINAL_LEVEL

        def rec(f: int) -> int:
            key = (tag, f)
            r = cache.get(key)
            if r is None:
                if level[f] == T:
                    r = term(fn(value[f]))
                else:
                    r = mk(level[f], rec(hi[f]), rec(lo[f]))
                cache[key] = r
            return r

        return rec(f)

    def restrict(self, f: int, lvl: int, val: bool) -> int:
        level, hi, lo = self._level, self._hi, self._lo
        cache, mk = self._cache, self.mk
        tag = ("restrict", lvl, bool(val))

        def rec(f: int) -> int:
            lf = level[f]
            if lf > lvl:
                return f
            if lf == lvl:
                return hi[f] if val else lo[f]
            key = (tag, f)
            r = cache.get(key)
            if r is None:
                r = cache[key] = mk(lf, rec(hi[f]), rec(lo[f]))
            return r

        return rec(f)

    def swap(self, f: int) -> int:
        level, hi, lo = self._level, self._hi, self._lo
        cache, mk = self._cache, self.mk
        T = TERMINAL_LEVEL

        def rec(f: int) -> int:
            if level[f] == T:
                return f
            key = ("swap", f)
            r = cache.get(key)
            if r is None:
                h, l = rec(hi[f]), rec(lo[f])
                new = level[f] ^ 1
                if level[h] <= new or level[l] <= new:
                    raise OrderingError(f"level {new} and its counterpart occur on one path", new)
                r = cache[key] = mk(new, h, l)
            return r

        return rec(f)

    def branch(self, lvl: int, hi_: int, lo_: int) -> int:
        level, hi, lo, mk = self._level, self._hi, self._lo, self.mk
        memo: dict[tuple[int, int], int] = {}

        def rec(h: int, l: int) -> int:
            if h == l:
                return h
            top = min(level[h], level[l])
            if top > lvl:
                return mk(lvl, h, l)
            key = (h, l)
            r = memo.get(key)
            if r is None:
                h1, h0 = (hi[h], lo[h]) if level[h] == top else (h, h)
                l1, l0 = (hi[l], lo[l]) if level[l] == top else (l, l)
                r = memo[key] = mk(top, rec(h1, l1), rec(h0, l0))
            return r

        return rec(self.restrict(hi_, lvl, True), self.restrict(lo_, lvl, False))

    def product_sum(self, f: int, g: int, cube: tuple[int, ...]) -> int:
        level, hi, lo, value = self._level, self._hi, self._lo, self._value
        mk, term, apply = self.mk, self.term, self.apply
        ncube = len(cube)
        T = TERMINAL_LEVEL
        memo: dict[tuple[int, int, int], int] = {}

        def rec(f: int, g: int, ci: int) -> int:
            lf, lg = level[f], level[g]
            if lf == T and value[f] == 0:
                return f
            if lg == T and value[g] == 0:
                return g
            if f > g:
                f, g, lf, lg = g, f, lg, lf
            key = (f, g, ci)
            r = memo.get(key)
            if r is not None:
                return r
            if (lf == T) != (lg == T):
                # a constant factor moves outside the sum
                r = apply(MUL, f, summed(g, ci)) if lf == T else apply(MUL, g, summed(f, ci))
                memo[key] = r
                return r
            top = lf if lf < lg else lg
            k = ci
            while k < ncube and cube[k] < top:
                k += 1
            if top == T:
                r = term(value[f] * value[g])
            else:
                f1, f0 = (hi[f], lo[f]) if lf == top else (f, f)
                g1, g0 = (hi[g], lo[g]) if lg == top else (g, g)
                if k < ncube and cube[k] == top:
                    r = apply(ADD, rec(f1, g1, k + 1), rec(f0, g0, k + 1))
                else:
                    r = mk(top, rec(f1, g1, k), rec(f0, g0, k))
            if k > ci:
                # cube variables tested by neither operand still contribute both branches
                r = self.times_pow2(r, k - ci)
            memo[key] = r
            return r

        def summed(g: int, ci: int) -> int:
            key = (-1, g, ci)
            r = memo.get(key)
            if r is not None:
                return r
            lg = level[g]
            k = ci
            while k < ncube and cube[k] < lg:
                k += 1
            if lg == T:
                r = g
            elif k < ncube and cube[k] == lg:
                r = apply(ADD, summed(hi[g], k + 1), summed(lo[g], k + 1))
            else:
                r = mk(lg, summed(hi[g], k), summed(lo[g], k))
            if k > ci:
                r = self.times_pow2(r, k - ci)
            memo[key] = r
            return r

        return rec(f, g, 0)

    def times_pow2(self, f: int, e: int) -> int:
        def double(x):
            return x << e if type(x) is int else math.ldexp(x, e)

        return self.map(("pow2", e), double, f)

    def reachable(self, f: int) -> list[int]:
        """Nodes reachable from ``f`` in depth-first preorder, then-child first."""
        level, hi, lo = self._level, self._hi, self._lo
        seen = set()
        order = []
        stack = [f]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            order.append(n)
            if level[n] != TERMINAL_LEVEL:
                stack.append(lo[n])
                stack.append(hi[n])
        return order
