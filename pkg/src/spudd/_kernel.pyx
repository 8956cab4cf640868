# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled node kernel.

Same interface and node numbering as ``_pykernel.Kernel``.  Node arrays and
hash tables are plain C.  Float terminals are stored as doubles and integer
terminals as sign-magnitude arrays of 64-bit limbs, so the exact fixed-point
arithmetic of regression never allocates Python objects; values only become
Python objects when they cross the interface or meet a Python callback.
"""

from libc.stdlib cimport malloc, calloc, realloc, free
from libc.string cimport memset, memcpy, memcmp
from libc.math cimport ldexp, isfinite
from libc.stdint cimport uint64_t, int64_t, uint8_t

from ._errors import DiagramError, OrderingError

cdef extern from *:
    """
    #include <stdint.h>
    #include <string.h>
    typedef unsigned __int128 spudd_u128;

    static int mag_trim(const uint64_t* a, int n) {
        while (n > 0 && a[n - 1] == 0) n--;
        return n;
    }

    /* r = a + b with na >= nb; r needs na + 1 limbs */
    static int mag_add(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) {
        spudd_u128 c = 0;
        int i;
        for (i = 0; i < na; i++) {
            c += (spudd_u128)a[i] + (i < nb ? b[i] : 0);
            r[i] = (uint64_t)c;
            c >>= 64;
        }
        if (c) {
            r[na] = (uint64_t)c;
            return na + 1;
        }
        return na;
    }

    /* r = a - b, requires a >= b */
    static int mag_sub(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) {
        uint64_t borrow = 0;
        int i;
        for (i = 0; i < na; i++) {
            uint64_t bi = i < nb ? b[i] : 0;
            uint64_t t = a[i] - bi;
            uint64_t out = (a[i] < bi) | (t < borrow);
            r[i] = t - borrow;
            borrow = out;
        }
        return mag_trim(r, na);
    }

    static int mag_cmp(const uint64_t* a, int na, const uint64_t* b, int nb) {
        int i;
        if (na != nb) return na < nb ? -1 : 1;
        for (i = na - 1; i >= 0; i--)
            if (a[i] != b[i]) return a[i] < b[i] ? -1 : 1;
        return 0;
    }

    /* r needs na + nb limbs */
    static int mag_mul(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) {
        int i, j;
        if (na == 0 || nb == 0) return 0;
        memset(r + nb, 0, (size_t)na * 8);
        {
            spudd_u128 c = 0;
            for (j = 0; j < nb; j++) {
                c += (spudd_u128)a[0] * b[j];
                r[j] = (uint64_t)c;
                c >>= 64;
            }
            r[nb] = (uint64_t)c;
        }
        for (i = 1; i < na; i++) {
            spudd_u128 c = 0;
            for (j = 0; j < nb; j++) {
                c += (spudd_u128)a[i] * b[j] + r[i + j];
                r[i + j] = (uint64_t)c;
                c >>= 64;
            }
            r[i + nb] = (uint64_t)c;
        }
        return mag_trim(r, na + nb);
    }

    /* r = a << e; r needs na + e / 64 + 1 limbs */
    static int mag_shl(const uint64_t* a, int na, int e, uint64_t* r) {
        int w = e / 64, s = e % 64, i;
        uint64_t carry = 0;
        if (na == 0) return 0;
        memset(r, 0, (size_t)w * 8);
        if (s == 0) {
            memcpy(r + w, a, (size_t)na * 8);
            return na + w;
        }
        for (i = 0; i < na; i++) {
            r[w + i] = (a[i] << s) | carry;
            carry = a[i] >> (64 - s);
        }
        if (carry) {
            r[w + na] = carry;
            return w + na + 1;
        }
        return w + na;
    }

    static uint64_t mag_hash(const uint64_t* a, int n, int neg) {
        uint64_t h = 0x84222325CBF29CE4ULL ^ (uint64_t)(n * 2 + neg);
        int i;
        for (i = 0; i < n; i++) {
            h ^= a[i];
            h *= 0x9E3779B97F4A7C15ULL;
            h ^= h >> 32;
        }
        h ^= h >> 29;
        h *= 0xBF58476D1CE4E5B9ULL;
        h ^= h >> 32;
        return h;
    }

    static int64_t double_bits(double x) {
        int64_t b;
        memcpy(&b, &x, 8);
        return b;
    }
    """
    int mag_add(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) nogil
    int mag_sub(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) nogil
    int mag_cmp(const uint64_t* a, int na, const uint64_t* b, int nb) nogil
    int mag_mul(const uint64_t* a, int na, const uint64_t* b, int nb, uint64_t* r) nogil
    int mag_shl(const uint64_t* a, int na, int e, uint64_t* r) nogil
    uint64_t mag_hash(const uint64_t* a, int n, int neg) nogil
    int64_t double_bits(double x) nogil

cdef enum:
    T = 1 << 30

cdef enum:
    ADD = 0
    MUL = 1
    MAX = 2
    MIN = 3
    SUB = 4
    RESTRICT = 5
    SWAP = 6
    POW2 = 7
    FIRST_TAG = 8

cdef enum:
    INTERNAL = 0
    FLOAT = 1
    INT = 2

cdef enum:
    IS_ZERO = 1
    IS_ONE = 2

TERMINAL_LEVEL = T


# ----------------------------------------------------------------------
# open-addressing hash table keyed by three 32-bit ints (a == -1 marks empty);
# 16-byte slots keep the tables of a working store small enough to stay in cache

cdef struct Slot:
    int a
    int b
    int c
    int val

cdef struct Table:
    Slot* slots
    size_t mask
    size_t count


cdef inline size_t _hash(long long k1, long long k2) nogil:
    cdef unsigned long long h = <unsigned long long>k1 * 0x9E3779B97F4A7C15ULL
    h ^= <unsigned long long>k2 + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2)
    h ^= h >> 31
    h *= 0xBF58476D1CE4E5B9ULL
    h ^= h >> 29
    return <size_t>h


cdef inline size_t _hash3(int a, int b, int c) nogil:
    return _hash((<long long>a << 32) | <unsigned int>b, c)


cdef int table_init(Table* t, size_t capacity) except -1:
    cdef size_t cap = 16
    while cap < capacity:
        cap <<= 1
    t.slots = <Slot*>malloc(cap * sizeof(Slot))
    if t.slots == NULL:
        raise MemoryError()
    memset(t.slots, 0xFF, cap * sizeof(Slot))
    t.mask = cap - 1
    t.count = 0
    return 0


cdef void table_free(Table* t) nogil:
    if t.slots != NULL:
        free(t.slots)
    t.slots = NULL
    t.count = 0
    t.mask = 0


cdef inline int table_get(Table* t, int a, int b, int c) nogil:
    cdef size_t i = _hash3(a, b, c) & t.mask
    cdef Slot* s
    while True:
        s = &t.slots[i]
        if s.a == a and s.b == b and s.c == c:
            return s.val
        if s.a == -1:
            return -1
        i = (i + 1) & t.mask


cdef int table_grow(Table* t) except -1:
    cdef Slot* old = t.slots
    cdef size_t oldcap = t.mask + 1
    cdef size_t cap = oldcap * 2
    cdef size_t i, j
    t.slots = <Slot*>malloc(cap * sizeof(Slot))
    if t.slots == NULL:
        t.slots = old
        raise MemoryError()
    memset(t.slots, 0xFF, cap * sizeof(Slot))
    t.mask = cap - 1
    for i in range(oldcap):
        if old[i].a != -1:
            j = _hash3(old[i].a, old[i].b, old[i].c) & t.mask
            while t.slots[j].a != -1:
                j = (j + 1) & t.mask
            t.slots[j] = old[i]
    free(old)
    return 0


cdef inline int table_put(Table* t, int a, int b, int c, int val) except -1:
    cdef size_t i
    if 2 * (t.count + 1) > t.mask + 1:
        table_grow(t)
    i = _hash3(a, b, c) & t.mask
    while t.slots[i].a != -1:
        if t.slots[i].a == a and t.slots[i].b == b and t.slots[i].c == c:
            t.slots[i].val = val
            return 0
        i = (i + 1) & t.mask
    t.slots[i].a = a
    t.slots[i].b = b
    t.slots[i].c = c
    t.slots[i].val = val
    t.count += 1
    return 0


# ----------------------------------------------------------------------
# per-operation memo that is reused across calls: a slot is live only when its
# stamp equals the current generation, so starting a new call is O(1)

cdef struct MSlot:
    long long k1
    long long k2
    int val
    unsigned int gen

cdef struct Memo:
    MSlot* slots
    size_t mask
    size_t count
    unsigned int gen


cdef int memo_init(Memo* m, size_t capacity) except -1:
    cdef size_t cap = 16
    while cap < capacity:
        cap <<= 1
    m.slots = <MSlot*>calloc(cap, sizeof(MSlot))
    if m.slots == NULL:
        raise MemoryError()
    m.mask = cap - 1
    m.count = 0
    m.gen = 1
    return 0


cdef void memo_free(Memo* m) nogil:
    if m.slots != NULL:
        free(m.slots)
    m.slots = NULL


cdef inline void memo_begin(Memo* m) nogil:
    m.count = 0
    m.gen += 1
    if m.gen == 0:
        memset(m.slots, 0, (m.mask + 1) * sizeof(MSlot))
        m.gen = 1


cdef inline int memo_get(Memo* m, long long k1, long long k2) nogil:
    cdef size_t i = _hash(k1, k2) & m.mask
    cdef MSlot* s
    while True:
        s = &m.slots[i]
        if s.gen != m.gen:
            return -1
        if s.k1 == k1 and s.k2 == k2:
            return s.val
        i = (i + 1) & m.mask


cdef int memo_grow(Memo* m) except -1:
    cdef MSlot* old = m.slots
    cdef size_t oldcap = m.mask + 1
    cdef size_t cap = oldcap * 2
    cdef size_t i, j
    m.slots = <MSlot*>calloc(cap, sizeof(MSlot))
    if m.slots == NULL:
        m.slots = old
        raise MemoryError()
    m.mask = cap - 1
    for i in range(oldcap):
        if old[i].gen == m.gen:
            j = _hash(old[i].k1, old[i].k2) & m.mask
            while m.slots[j].gen == m.gen:
                j = (j + 1) & m.mask
            m.slots[j] = old[i]
    free(old)
    return 0


cdef inline int memo_put(Memo* m, long long k1, long long k2, int val) except -1:
    cdef size_t i
    if 2 * (m.count + 1) > m.mask + 1:
        memo_grow(m)
    i = _hash(k1, k2) & m.mask
    while m.slots[i].gen == m.gen:
        if m.slots[i].k1 == k1 and m.slots[i].k2 == k2:
            m.slots[i].val = val
            return 0
        i = (i + 1) & m.mask
    m.slots[i].k1 = k1
    m.slots[i].k2 = k2
    m.slots[i].val = val
    m.slots[i].gen = m.gen
    m.count += 1
    return 0


cdef inline long long _pair(long long a, long long b) nogil:
    return (a << 32) | b


# intern table for integer terminals, keyed by content
cdef struct ISlot:
    uint64_t h
    int node
    int len


cdef struct Node:
    int level
    int hi
    int lo
    uint8_t kind
    uint8_t flag


cdef class Kernel:
    cdef Node* _nodes
    cdef double* _fval
    cdef int64_t* _ioff
    cdef int* _ilen          # limb count, negated for negative values
    cdef int _n
    cdef int _cap

    cdef uint64_t* _limbs
    cdef int64_t _limbs_n
    cdef int64_t _limbs_cap
    cdef uint64_t* _scratch
    cdef int _scratch_cap

    cdef ISlot* _islots
    cdef size_t _imask
    cdef size_t _icount

    cdef dict _tags
    cdef Table _unique
    cdef Table _floats
    cdef Table _new
    cdef Table _old
    cdef Memo _ps_memo
    cdef Memo _branch_memo
    cdef Memo _seen
    cdef object _cache_limit

    def __cinit__(self, cache_limit=None, capacity=1024):
        cdef size_t cap = 1024
        while cap < <size_t>capacity:
            cap <<= 1
        self._cap = 0
        self._n = 0
        self._grow_nodes(cap)
        self._limbs_cap = 4 * cap
        self._limbs_n = 0
        self._limbs = <uint64_t*>malloc(self._limbs_cap * sizeof(uint64_t))
        self._scratch_cap = 64
        self._scratch = <uint64_t*>malloc(self._scratch_cap * sizeof(uint64_t))
        self._imask = 2 * cap - 1
        self._icount = 0
        self._islots = <ISlot*>malloc((self._imask + 1) * sizeof(ISlot))
        if self._limbs == NULL or self._scratch == NULL or self._islots == NULL:
            raise MemoryError()
        memset(self._islots, 0xFF, (self._imask + 1) * sizeof(ISlot))
        self._tags = {}
        table_init(&self._unique, 2 * cap)
        table_init(&self._floats, 64)
        table_init(&self._new, 2 * cap)
        table_init(&self._old, 16)
        memo_init(&self._ps_memo, 256)
        memo_init(&self._branch_memo, 64)
        memo_init(&self._seen, 256)
        self._cache_limit = cache_limit

    def __dealloc__(self):
        free(self._nodes)
        free(self._fval)
        free(self._ioff)
        free(self._ilen)
        free(self._limbs)
        free(self._scratch)
        free(self._islots)
        table_free(&self._unique)
        table_free(&self._floats)
        table_free(&self._new)
        table_free(&self._old)
        memo_free(&self._ps_memo)
        memo_free(&self._branch_memo)
        memo_free(&self._seen)

    cdef int _grow_nodes(self, int newcap) except -1:
        self._nodes = <Node*>realloc(self._nodes, newcap * sizeof(Node))
        self._fval = <double*>realloc(self._fval, newcap * sizeof(double))
        self._ioff = <int64_t*>realloc(self._ioff, newcap * sizeof(int64_t))
        self._ilen = <int*>realloc(self._ilen, newcap * sizeof(int))
        if not (self._nodes and self._fval and self._ioff and self._ilen):
            raise MemoryError()
        self._cap = newcap
        return 0

    property cache_limit:
        def __get__(self):
            return self._cache_limit

        def __set__(self, value):
            self._cache_limit = value

    def __len__(self):
        return self._n

    cdef inline int _check(self, long n) except -1:
        if n < 0 or n >= self._n:
            raise IndexError(f"node {n} out of range")
        return 0

    def level(self, long n):
        self._check(n)
        return self._nodes[n].level

    def hi(self, long n):
        self._check(n)
        return self._nodes[n].hi

    def lo(self, long n):
        self._check(n)
        return self._nodes[n].lo

    def value(self, long n):
        self._check(n)
        return self._pyvalue(n)

    cdef object _pyvalue(self, int n):
        cdef int k = self._nodes[n].kind
        cdef int len_
        if k == FLOAT:
            return self._fval[n]
        if k == INT:
            len_ = self._ilen[n]
            if len_ == 0:
                return 0
            data = (<char*>(self._limbs + self._ioff[n]))[:8 * abs(len_)]
            v = int.from_bytes(data, "little")
            return -v if len_ < 0 else v
        return None

    # ------------------------------------------------------------------
    # construction

    cdef int _append(self, int level, int hi, int lo, uint8_t kind, uint8_t flag) except -1:
        if self._n == self._cap:
            if self._cap >= (1 << 30):
                raise MemoryError("node table full")
            self._grow_nodes(self._cap * 2)
        cdef int r = self._n
        cdef Node* p = &self._nodes[r]
        p.level = level
        p.hi = hi
        p.lo = lo
        p.kind = kind
        p.flag = flag
        self._n += 1
        return r

    cdef int _term_float(self, double x) except -1:
        if not isfinite(x):
            raise DiagramError(f"non-finite terminal value {x!r}")
        # 0.0 and -0.0 share one terminal; keep the positive zero
        x += 0.0
        cdef long long key = double_bits(x)
        cdef int r = table_get(&self._floats, <int>(key >> 32), <int>key, 0)
        if r < 0:
            r = self._append(T, -1, -1, FLOAT, IS_ZERO if x == 0.0 else (IS_ONE if x == 1.0 else 0))
            self._fval[r] = x
            table_put(&self._floats, <int>(key >> 32), <int>key, 0, r)
        return r

    cdef int _igrow(self) except -1:
        cdef ISlot* old = self._islots
        cdef size_t oldcap = self._imask + 1
        cdef size_t cap = oldcap * 2
        cdef size_t i, j
        self._islots = <ISlot*>malloc(cap * sizeof(ISlot))
        if self._islots == NULL:
            self._islots = old
            raise MemoryError()
        memset(self._islots, 0xFF, cap * sizeof(ISlot))
        self._imask = cap - 1
        for i in range(oldcap):
            if old[i].node != -1:
                j = old[i].h & self._imask
                while self._islots[j].node != -1:
                    j = (j + 1) & self._imask
                self._islots[j] = old[i]
        free(old)
        return 0

    cdef int _term_int(self, const uint64_t* mag, int n, bint neg) except -1:
        """Intern the integer ``(-1)**neg * mag``; ``mag`` must be trimmed."""
        cdef uint64_t h
        cdef size_t i
        cdef int node, slen
        cdef int64_t need
        if n == 0:
            neg = False
        slen = -n if neg else n
        h = mag_hash(mag, n, neg)
        i = h & self._imask
        while True:
            node = self._islots[i].node
            if node == -1:
                break
            if self._islots[i].h == h and self._islots[i].len == slen:
                if n == 0 or memcmp(self._limbs + self._ioff[node], mag, n * sizeof(uint64_t)) == 0:
                    return node
            i = (i + 1) & self._imask
        need = self._limbs_n + n
        if need > self._limbs_cap:
            while need > self._limbs_cap:
                self._limbs_cap *= 2
            self._limbs = <uint64_t*>realloc(self._limbs, self._limbs_cap * sizeof(uint64_t))
            if self._limbs == NULL:
                raise MemoryError()
        node = self._append(T, -1, -1, INT, IS_ZERO if n == 0 else (IS_ONE if n == 1 and mag[0] == 1 and not neg else 0))
        memcpy(self._limbs + self._limbs_n, mag, n * sizeof(uint64_t))
        self._ioff[node] = self._limbs_n
        self._ilen[node] = slen
        self._limbs_n = need
        self._islots[i].h = h
        self._islots[i].node = node
        self._islots[i].len = slen
        self._icount += 1
        if 2 * self._icount > self._imask + 1:
            self._igrow()
        return node

    cdef int _reserve(self, int n) except -1:
        if n > self._scratch_cap:
            while n > self._scratch_cap:
                self._scratch_cap *= 2
            self._scratch = <uint64_t*>realloc(self._scratch, self._scratch_cap * sizeof(uint64_t))
            if self._scratch == NULL:
                raise MemoryError()
        return 0

    cdef int _term_py(self, object value) except -1:
        cdef int nlimbs
        if type(value) is int:
            neg = value < 0
            mag = -value if neg else value
            nlimbs = (mag.bit_length() + 63) // 64
            self._reserve(nlimbs + 1)
            if nlimbs:
                data = mag.to_bytes(8 * nlimbs, "little")
                memcpy(self._scratch, <const char*>data, 8 * nlimbs)
            return self._term_int(self._scratch, nlimbs, neg)
        return self._term_float(value)

    def term(self, value):
        return self._term_py(value)

    cdef inline int _mk(self, int level, int hi, int lo) except -1:
        if hi == lo:
            return hi
        cdef int r = table_get(&self._unique, level, hi, lo)
        if r < 0:
            r = self._append(level, hi, lo, INTERNAL, 0)
            table_put(&self._unique, level, hi, lo, r)
        return r

    def mk(self, int level, int hi, int lo):
        self._check(hi)
        self._check(lo)
        return self._mk(level, hi, lo)

    # ------------------------------------------------------------------
    # cache: two generations, the older one is dropped when the newer fills up

    cdef inline int _cget(self, int op, int f, int arg) nogil:
        cdef int r = table_get(&self._new, op, f, arg)
        if r < 0 and self._old.count:
            r = table_get(&self._old, op, f, arg)
        return r

    cdef inline int _cput(self, int op, int f, int arg, int val) except -1:
        return table_put(&self._new, op, f, arg, val)

    def cache_size(self):
        return self._new.count + self._old.count

    def clear_cache(self):
        table_free(&self._new)
        table_free(&self._old)
        table_init(&self._new, 1024)
        table_init(&self._old, 16)

    def trim_cache(self):
        if self._cache_limit is None:
            return
        limit = int(self._cache_limit)
        if self._new.count + self._old.count > limit:
            table_free(&self._old)
            if self._new.count > limit:
                table_free(&self._new)
                table_init(&self._new, 1024)
                table_init(&self._old, 16)
            elif self._new.count > limit // 2:
                self._old = self._new
                table_init(&self._new, 1024)
            else:
                table_init(&self._old, 16)

    cdef long long _tag_id(self, object tag) except -1:
        r = self._tags.get(tag)
        if r is None:
            r = FIRST_TAG + len(self._tags)
            if r >= (1 << 31) - 1:
                raise MemoryError("too many distinct operation tags")
            self._tags[tag] = r
        return r

    # ------------------------------------------------------------------
    # terminal arithmetic

    cdef int _int_addsub(self, int f, int g, bint negate_g) except -1:
        cdef int la = self._ilen[f], lb = self._ilen[g]
        cdef bint na = la < 0
        cdef bint nb = (lb < 0) != negate_g
        cdef int ma = -la if la < 0 else la
        cdef int mb = -lb if lb < 0 else lb
        cdef int n, c
        self._reserve((ma if ma > mb else mb) + 1)
        cdef const uint64_t* a = self._limbs + self._ioff[f]
        cdef const uint64_t* b = self._limbs + self._ioff[g]
        if na == nb:
            if ma >= mb:
                n = mag_add(a, ma, b, mb, self._scratch)
            else:
                n = mag_add(b, mb, a, ma, self._scratch)
            return self._term_int(self._scratch, n, na)
        c = mag_cmp(a, ma, b, mb)
        if c == 0:
            return self._term_int(self._scratch, 0, False)
        if c > 0:
            n = mag_sub(a, ma, b, mb, self._scratch)
            return self._term_int(self._scratch, n, na)
        n = mag_sub(b, mb, a, ma, self._scratch)
        return self._term_int(self._scratch, n, nb)

    cdef int _int_cmp(self, int f, int g) nogil:
        cdef int la = self._ilen[f], lb = self._ilen[g]
        if (la < 0) != (lb < 0):
            return -1 if la < 0 else 1
        if la < 0:
            return -mag_cmp(self._limbs + self._ioff[f], -la, self._limbs + self._ioff[g], -lb)
        return mag_cmp(self._limbs + self._ioff[f], la, self._limbs + self._ioff[g], lb)

    cdef int _int_mul(self, int f, int g) except -1:
        cdef int la = self._ilen[f], lb = self._ilen[g]
        cdef int ma = -la if la < 0 else la
        cdef int mb = -lb if lb < 0 else lb
        self._reserve(ma + mb + 1)
        cdef int n = mag_mul(self._limbs + self._ioff[f], ma, self._limbs + self._ioff[g], mb, self._scratch)
        return self._term_int(self._scratch, n, (la < 0) != (lb < 0))

    cdef int _terminal_op(self, int op, int f, int g) except -1:
        cdef int kf = self._nodes[f].kind, kg = self._nodes[g].kind
        cdef double a, b
        if kf == FLOAT and kg == FLOAT:
            a = self._fval[f]
            b = self._fval[g]
            if op == ADD:
                return self._term_float(a + b)
            if op == MUL:
                return self._term_float(a * b)
            if op == MAX:
                return g if b > a else f
            if op == MIN:
                return g if b < a else f
            return self._term_float(a - b)
        if kf == INT and kg == INT:
            if op == ADD:
                return self._int_addsub(f, g, False)
            if op == MUL:
                return self._int_mul(f, g)
            if op == MAX:
                return g if self._int_cmp(g, f) > 0 else f
            if op == MIN:
                return g if self._int_cmp(g, f) < 0 else f
            return self._int_addsub(f, g, True)
        # mixed kinds follow Python's numeric semantics
        x = self._pyvalue(f)
        y = self._pyvalue(g)
        if op == ADD:
            return self._term_py(x + y)
        if op == MUL:
            return self._term_py(x * y)
        if op == MAX:
            return self._term_py(y if y > x else x)
        if op == MIN:
            return self._term_py(y if y < x else x)
        return self._term_py(x - y)

    # ------------------------------------------------------------------
    # operations

    cdef int _apply(self, int op, int f, int g) except -1:
        cdef int lf, lg, r, t
        if op != SUB and f > g:
            t = f
            f = g
            g = t
        lf = self._nodes[f].level
        lg = self._nodes[g].level
        if lf == T and lg == T:
            return self._terminal_op(op, f, g)
        if op == ADD:
            if lf == T and self._nodes[f].flag & IS_ZERO:
                return g
            if lg == T and self._nodes[g].flag & IS_ZERO:
                return f
        elif op == MUL:
            if lf == T:
                if self._nodes[f].flag & IS_ZERO:
                    return f
                if self._nodes[f].flag & IS_ONE:
                    return g
            if lg == T:
                if self._nodes[g].flag & IS_ZERO:
                    return g
                if self._nodes[g].flag & IS_ONE:
                    return f
        elif op == SUB:
            if lg == T and self._nodes[g].flag & IS_ZERO:
                return f
        elif f == g:
            return f
        r = self._cget(op, f, g)
        if r >= 0:
            return r
        if lf == lg:
            r = self._mk(lf, self._apply(op, self._nodes[f].hi, self._nodes[g].hi), self._apply(op, self._nodes[f].lo, self._nodes[g].lo))
        elif lf < lg:
            r = self._mk(lf, self._apply(op, self._nodes[f].hi, g), self._apply(op, self._nodes[f].lo, g))
        else:
            r = self._mk(lg, self._apply(op, f, self._nodes[g].hi), self._apply(op, f, self._nodes[g].lo))
        self._cput(op, f, g, r)
        return r

    def apply(self, int op, int f, int g):
        if op < 0 or op > SUB:
            raise ValueError(f"unknown operation code {op}")
        self._check(f)
        self._check(g)
        return self._apply(op, f, g)

    cdef int _apply_fn(self, long long tid, object fn, int f, int g) except -1:
        cdef int r = self._cget(<int>tid, f, g)
        if r >= 0:
            return r
        cdef int lf = self._nodes[f].level
        cdef int lg = self._nodes[g].level
        if lf == T and lg == T:
            r = self._term_py(fn(self._pyvalue(f), self._pyvalue(g)))
        elif lf == lg:
            r = self._mk(lf, self._apply_fn(tid, fn, self._nodes[f].hi, self._nodes[g].hi),
                         self._apply_fn(tid, fn, self._nodes[f].lo, self._nodes[g].lo))
        elif lf < lg:
            r = self._mk(lf, self._apply_fn(tid, fn, self._nodes[f].hi, g), self._apply_fn(tid, fn, self._nodes[f].lo, g))
        else:
            r = self._mk(lg, self._apply_fn(tid, fn, f, self._nodes[g].hi), self._apply_fn(tid, fn, f, self._nodes[g].lo))
        self._cput(<int>tid, f, g, r)
        return r

    def apply_fn(self, tag, fn, int f, int g):
        self._check(f)
        self._check(g)
        return self._apply_fn(self._tag_id(("2", tag)), fn, f, g)

    cdef int _map(self, long long tid, object fn, int f) except -1:
        cdef int r = self._cget(<int>tid, f, 0)
        if r >= 0:
            return r
        if self._nodes[f].level == T:
            r = self._term_py(fn(self._pyvalue(f)))
        else:
            r = self._mk(self._nodes[f].level, self._map(tid, fn, self._nodes[f].hi), self._map(tid, fn, self._nodes[f].lo))
        self._cput(<int>tid, f, 0, r)
        return r

    def map(self, tag, fn, int f):
        self._check(f)
        return self._map(self._tag_id(("1", tag)), fn, f)

    cdef int _restrict(self, int f, int lvl, int val) except -1:
        cdef int lf = self._nodes[f].level
        if lf > lvl:
            return f
        if lf == lvl:
            return self._nodes[f].hi if val else self._nodes[f].lo
        cdef int k2 = 2 * lvl + val
        cdef int r = self._cget(RESTRICT, f, k2)
        if r < 0:
            r = self._mk(lf, self._restrict(self._nodes[f].hi, lvl, val), self._restrict(self._nodes[f].lo, lvl, val))
            self._cput(RESTRICT, f, k2, r)
        return r

    def restrict(self, int f, int lvl, val):
        self._check(f)
        return self._restrict(f, lvl, 1 if val else 0)

    cdef int _swap(self, int f) except -1:
        if self._nodes[f].level == T:
            return f
        cdef int r = self._cget(SWAP, f, 0)
        cdef int h, l, new
        if r < 0:
            h = self._swap(self._nodes[f].hi)
            l = self._swap(self._nodes[f].lo)
            new = self._nodes[f].level ^ 1
            if self._nodes[h].level <= new or self._nodes[l].level <= new:
                raise OrderingError(f"level {new} and its counterpart occur on one path", new)
            r = self._mk(new, h, l)
            self._cput(SWAP, f, 0, r)
        return r

    def swap(self, int f):
        self._check(f)
        return self._swap(f)

    cdef int _branch(self, Memo* memo, int lvl, int h, int l) except -1:
        if h == l:
            return h
        cdef int lh = self._nodes[h].level
        cdef int ll = self._nodes[l].level
        cdef int top = lh if lh < ll else ll
        if top > lvl:
            return self._mk(lvl, h, l)
        cdef long long key = _pair(h, l)
        cdef int r = memo_get(memo, key, 0)
        if r >= 0:
            return r
        cdef int h1 = h, h0 = h, l1 = l, l0 = l
        if lh == top:
            h1 = self._nodes[h].hi
            h0 = self._nodes[h].lo
        if ll == top:
            l1 = self._nodes[l].hi
            l0 = self._nodes[l].lo
        r = self._mk(top, self._branch(memo, lvl, h1, l1), self._branch(memo, lvl, h0, l0))
        memo_put(memo, key, 0, r)
        return r

    def branch(self, int lvl, int hi, int lo):
        self._check(hi)
        self._check(lo)
        hi = self._restrict(hi, lvl, 1)
        lo = self._restrict(lo, lvl, 0)
        memo_begin(&self._branch_memo)
        return self._branch(&self._branch_memo, lvl, hi, lo)

    cdef int _pow2(self, int f, int e) except -1:
        cdef int r = self._cget(POW2, f, e)
        cdef int len_, m, n
        cdef double x
        if r >= 0:
            return r
        if self._nodes[f].level == T:
            if self._nodes[f].kind == INT:
                len_ = self._ilen[f]
                m = -len_ if len_ < 0 else len_
                self._reserve(m + e // 64 + 2)
                n = mag_shl(self._limbs + self._ioff[f], m, e, self._scratch)
                r = self._term_int(self._scratch, n, len_ < 0)
            else:
                x = ldexp(self._fval[f], e)
                if not isfinite(x):
                    raise OverflowError("math range error")
                r = self._term_float(x)
        else:
            r = self._mk(self._nodes[f].level, self._pow2(self._nodes[f].hi, e), self._pow2(self._nodes[f].lo, e))
        self._cput(POW2, f, e, r)
        return r

    def times_pow2(self, int f, int e):
        self._check(f)
        if e < 0:
            raise ValueError("exponent must be non-negative")
        return self._pow2(f, e)

    cdef int _product_sum(self, Memo* memo, int* cube, int ncube, int f, int g, int ci) except -1:
        cdef int lf = self._nodes[f].level
        cdef int lg = self._nodes[g].level
        cdef int t, r, k, top, f1, f0, g1, g0, a, b
        if lf == T and self._nodes[f].flag & IS_ZERO:
            return f
        if lg == T and self._nodes[g].flag & IS_ZERO:
            return g
        if f > g:
            t = f; f = g; g = t
            t = lf; lf = lg; lg = t
        cdef long long key = _pair(f, g)
        r = memo_get(memo, key, ci)
        if r >= 0:
            return r
        if (lf == T) != (lg == T):
            # a constant factor moves outside the sum
            if lf == T:
                r = self._apply(MUL, f, self._summed(memo, cube, ncube, g, ci))
            else:
                r = self._apply(MUL, g, self._summed(memo, cube, ncube, f, ci))
            memo_put(memo, key, ci, r)
            return r
        top = lf if lf < lg else lg
        k = ci
        while k < ncube and cube[k] < top:
            k += 1
        if top == T:
            r = self._terminal_op(MUL, f, g)
        else:
            f1 = f0 = f
            g1 = g0 = g
            if lf == top:
                f1 = self._nodes[f].hi
                f0 = self._nodes[f].lo
            if lg == top:
                g1 = self._nodes[g].hi
                g0 = self._nodes[g].lo
            if k < ncube and cube[k] == top:
                a = self._product_sum(memo, cube, ncube, f1, g1, k + 1)
                b = self._product_sum(memo, cube, ncube, f0, g0, k + 1)
                r = self._apply(ADD, a, b)
            else:
                a = self._product_sum(memo, cube, ncube, f1, g1, k)
                b = self._product_sum(memo, cube, ncube, f0, g0, k)
                r = self._mk(top, a, b)
        if k > ci:
            # cube variables tested by neither operand still contribute both branches
            r = self._pow2(r, k - ci)
        memo_put(memo, key, ci, r)
        return r

    cdef int _summed(self, Memo* memo, int* cube, int ncube, int g, int ci) except -1:
        cdef long long key = -1 - <long long>g
        cdef int r = memo_get(memo, key, ci)
        cdef int lg, k, a, b
        if r >= 0:
            return r
        lg = self._nodes[g].level
        k = ci
        while k < ncube and cube[k] < lg:
            k += 1
        if lg == T:
            r = g
        elif k < ncube and cube[k] == lg:
            a = self._summed(memo, cube, ncube, self._nodes[g].hi, k + 1)
            b = self._summed(memo, cube, ncube, self._nodes[g].lo, k + 1)
            r = self._apply(ADD, a, b)
        else:
            a = self._summed(memo, cube, ncube, self._nodes[g].hi, k)
            b = self._summed(memo, cube, ncube, self._nodes[g].lo, k)
            r = self._mk(lg, a, b)
        if k > ci:
            r = self._pow2(r, k - ci)
        memo_put(memo, key, ci, r)
        return r

    def product_sum(self, int f, int g, cube):
        self._check(f)
        self._check(g)
        cdef int ncube = len(cube)
        cdef int* c = <int*>malloc((ncube + 1) * sizeof(int))
        cdef int i
        if c == NULL:
            raise MemoryError()
        try:
            for i in range(ncube):
                c[i] = cube[i]
            memo_begin(&self._ps_memo)
            return self._product_sum(&self._ps_memo, c, ncube, f, g, 0)
        finally:
            free(c)

    def reachable(self, int f):
        """Nodes reachable from ``f`` in depth-first preorder, then-child first."""
        self._check(f)
        cdef Memo* seen = &self._seen
        cdef list order = []
        cdef int* stack
        cdef int top = 0, cap = 256, n
        stack = <int*>malloc(cap * sizeof(int))
        if stack == NULL:
            raise MemoryError()
        memo_begin(seen)
        try:
            stack[top] = f
            top += 1
            while top:
                top -= 1
                n = stack[top]
                if memo_get(seen, n, 0) >= 0:
                    continue
                memo_put(seen, n, 0, 1)
                order.append(n)
                if self._nodes[n].level != T:
                    if top + 2 > cap:
                        cap *= 2
                        stack = <int*>realloc(stack, cap * sizeof(int))
                        if stack == NULL:
                            raise MemoryError()
                    stack[top] = self._nodes[n].lo
                    stack[top + 1] = self._nodes[n].hi
                    top += 2
        finally:
            free(stack)
        return order

    cdef int _import(self, Kernel src, int n, dict memo) except -1:
        cached = memo.get(n)
        if cached is not None:
            return cached
        cdef Node* p = &src._nodes[n]
        cdef int r, len_
        if p.level == T:
            if p.kind == FLOAT:
                r = self._term_float(src._fval[n])
            else:
                len_ = src._ilen[n]
                r = self._term_int(src._limbs + src._ioff[n], -len_ if len_ < 0 else len_, len_ < 0)
        else:
            r = self._mk(p.level, self._import(src, p.hi, memo), self._import(src, p.lo, memo))
        memo[n] = r
        return r

    def import_nodes(self, Kernel src, roots, dict memo):
        """Copy the diagrams rooted at ``roots`` out of ``src``.

        ``memo`` maps ``src`` nodes to nodes of this kernel and is updated.
        """
        out = []
        for n in roots:
            src._check(n)
            out.append(self._import(src, n, memo))
        return out
