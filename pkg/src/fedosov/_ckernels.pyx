# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled term kernels on the gmpy2 C API.

Same contract as ``fedosov._pykernels``.  Both factors are scaled to integer
coefficients over their common denominators, products are accumulated with
``mpz_addmul`` in raw slots indexed by a hash map on the packed monomial
key, and each output coefficient is divided out and canonicalized once.
Maps whose keys do not fit in 62 bits go through the pure-Python code.
"""

from cpython.dict cimport PyDict_SetItem
from cython.operator cimport dereference as deref
from libc.stdlib cimport free, malloc, realloc
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

from gmpy2 cimport (GMPy_MPQ_New, GMPy_MPZ_New, MPQ_Check, __mpz_struct, import_gmpy2, mpq, mpz,
                    mpz_ptr)

import gmpy2

from fedosov import _pykernels

cdef extern from "gmp.h":
    ctypedef const __mpz_struct *mpz_srcptr
    ctypedef void *mpq_any "mpq_ptr"
    void mpz_init(mpz_ptr)
    void mpz_clear(mpz_ptr)
    void mpz_set(mpz_ptr, mpz_srcptr)
    void mpz_set_ui(mpz_ptr, unsigned long)
    void mpz_mul(mpz_ptr, mpz_srcptr, mpz_srcptr)
    void mpz_addmul(mpz_ptr, mpz_srcptr, mpz_srcptr)
    void mpz_lcm(mpz_ptr, mpz_srcptr, mpz_srcptr)
    void mpz_divexact(mpz_ptr, mpz_srcptr, mpz_srcptr)
    void mpz_swap(mpz_ptr, mpz_ptr)
    int mpz_sgn(mpz_srcptr)
    mpz_ptr mpq_numref(mpq_any)
    mpz_ptr mpq_denref(mpq_any)
    void mpq_canonicalize(mpq_any)

import_gmpy2()

IMPLEMENTATION = "cython"

ctypedef long long i64
ctypedef pair[i64, Py_ssize_t] KeyIdx
ctypedef __mpz_struct mpz_slot

cdef i64 KEY_LIMIT = (<i64>1) << 62


cdef class _Acc:
    """Growable array of integer numerator slots addressed by packed key."""
    cdef unordered_map[i64, Py_ssize_t] index
    cdef vector[i64] keys
    cdef mpz_ptr slots
    cdef Py_ssize_t size, cap

    def __cinit__(self, Py_ssize_t hint):
        self.cap = hint if hint > 8 else 8
        self.size = 0
        self.slots = <mpz_ptr>malloc(self.cap * sizeof(mpz_slot))
        if self.slots == NULL:
            raise MemoryError()
        self.index.reserve(self.cap)

    def __dealloc__(self):
        cdef Py_ssize_t i
        if self.slots != NULL:
            for i in range(self.size):
                mpz_clear(&self.slots[i])
            free(self.slots)

    cdef inline mpz_ptr slot(self, i64 key) except NULL:
        cdef Py_ssize_t i
        cdef mpz_ptr grown
        it = self.index.find(key)
        if it != self.index.end():
            return &self.slots[deref(it).second]
        if self.size == self.cap:
            grown = <mpz_ptr>realloc(self.slots, 2 * self.cap * sizeof(mpz_slot))
            if grown == NULL:
                raise MemoryError()
            self.slots = grown
            self.cap *= 2
        i = self.size
        mpz_init(&self.slots[i])
        self.index[key] = i
        self.keys.push_back(key)
        self.size += 1
        return &self.slots[i]

    cdef dict to_dict(self, mpz den, bint keep_zeros):
        """Slots divided by ``den`` as canonical mpq values."""
        cdef dict out = {}
        cdef Py_ssize_t i
        cdef mpq q
        for i in range(self.size):
            if not keep_zeros and mpz_sgn(&self.slots[i]) == 0:
                continue
            q = GMPy_MPQ_New(NULL)
            mpz_swap(mpq_numref(q.q), &self.slots[i])
            mpz_set(mpq_denref(q.q), den.z)
            mpq_canonicalize(q.q)
            PyDict_SetItem(out, self.keys[i], q)
        return out


cdef bint _unpack(dict terms, object scale, vector[KeyIdx]& keys, list nums, mpz den):
    """Keys and integer numerators of ``scale * terms`` over the common denominator ``den``.

    Returns False if a key is out of range.
    """
    cdef list vals = []
    cdef Py_ssize_t n = 0
    cdef mpq c
    cdef mpz num
    mpz_set_ui(den.z, 1)
    for k, v in terms.items():
        if k < 0 or k >= KEY_LIMIT:
            return False
        c = v if MPQ_Check(v) else gmpy2.mpq(v)
        if scale is not None:
            c = c * scale
        keys.push_back(KeyIdx(<i64>k, n))
        vals.append(c)
        mpz_lcm(den.z, den.z, mpq_denref(c.q))
        n += 1
    for c in vals:
        num = GMPy_MPZ_New(NULL)
        mpz_divexact(num.z, den.z, mpq_denref(c.q))
        mpz_mul(num.z, num.z, mpq_numref(c.q))
        nums.append(num)
    return True


cdef int _accumulate(_Acc acc, mpz den, dict a, dict b, object scale, object bound) except -1:
    """``acc += scale * a * b`` with every slot over the denominator written to ``den``."""
    cdef vector[KeyIdx] ka, kb
    cdef list na_ = [], nb_ = []
    cdef mpz da = GMPy_MPZ_New(NULL), db = GMPy_MPZ_New(NULL)
    cdef mpz qa, qb
    cdef mpz_ptr dst
    cdef Py_ssize_t i, j, na, nb
    cdef i64 lim, kbj
    cdef bint bounded = bound is not None
    cdef i64 cbound = 0
    if bounded:
        if bound > KEY_LIMIT:
            bounded = False
        else:
            cbound = bound
    if not _unpack(a, None, ka, na_, da) or not _unpack(b, scale, kb, nb_, db):
        return 0
    mpz_mul(den.z, da.z, db.z)
    sort(ka.begin(), ka.end())
    na = ka.size()
    nb = kb.size()
    for j in range(nb):
        kbj = kb[j].first
        qb = <mpz>nb_[kb[j].second]
        lim = cbound - kbj
        for i in range(na):
            if bounded and ka[i].first >= lim:
                break
            qa = <mpz>na_[ka[i].second]
            dst = acc.slot(ka[i].first + kbj)
            mpz_addmul(dst, qa.z, qb.z)
    return 1


def mul_terms(dict a, dict b, bound):
    """Product of two packed term maps, dropping keys ``>= bound``."""
    cdef _Acc acc
    cdef mpz den = GMPy_MPZ_New(NULL)
    if len(a) < len(b):
        a, b = b, a
    acc = _Acc(len(a) + len(b))
    if not _accumulate(acc, den, a, b, None, bound):
        return _pykernels.mul_terms(a, b, bound)
    return acc.to_dict(den, False)


def addmul_terms(dict acc, dict a, dict b, scale, bound):
    """In place ``acc += scale * a * b`` (zeros are left for the caller to prune)."""
    cdef _Acc part = _Acc(len(a) + len(b))
    cdef mpz den = GMPy_MPZ_New(NULL)
    if scale is not None and not MPQ_Check(scale):
        scale = gmpy2.mpq(scale)
    if not _accumulate(part, den, a, b, scale, bound):
        _pykernels.addmul_terms(acc, a, b, scale, bound)
        return
    get = acc.get
    for k, v in part.to_dict(den, True).items():
        acc[k] = get(k, 0) + v
