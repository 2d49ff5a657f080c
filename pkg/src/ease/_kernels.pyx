# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ROUGE kernels over integer token ids."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def lcs_length(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b):
    """Length of the longest common subsequence (two-row DP)."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef cnp.int64_t *prev
    cdef cnp.int64_t *cur
    cdef cnp.int64_t *tmp
    cdef cnp.int64_t ai, up, left
    if n == 0 or m == 0:
        return 0
    prev = <cnp.int64_t *> malloc((m + 1) * sizeof(cnp.int64_t))
    cur = <cnp.int64_t *> malloc((m + 1) * sizeof(cnp.int64_t))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    for j in range(m + 1):
        prev[j] = 0
    cur[0] = 0
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                up = prev[j + 1]
                left = cur[j]
                cur[j + 1] = up if up > left else left
        tmp = prev
        prev = cur
        cur = tmp
    result = prev[m]
    free(prev)
    free(cur)
    return result


cdef cnp.ndarray _gram_keys(const cnp.int64_t[::1] a, int n, cnp.int64_t base):
    cdef Py_ssize_t count = a.shape[0] - n + 1, i, k
    cdef cnp.int64_t key
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(count, dtype=np.int64)
    for i in range(count):
        key = 0
        for k in range(n):
            key = key * base + a[i + k]
        out[i] = key
    out.sort()
    return out


def ngram_overlap(const cnp.int64_t[::1] cand, const cnp.int64_t[::1] ref, int n):
    """(clipped overlap, candidate n-gram count, reference n-gram count).

    Ids must be non-negative and small enough that ``base**n`` fits in int64.
    """
    cdef cnp.int64_t base = 1, mx = 0
    cdef Py_ssize_t i
    for i in range(cand.shape[0]):
        if cand[i] > mx:
            mx = cand[i]
    for i in range(ref.shape[0]):
        if ref[i] > mx:
            mx = ref[i]
    base = mx + 1
    cdef cnp.int64_t[::1] ka = _gram_keys(cand, n, base)
    cdef cnp.int64_t[::1] kb = _gram_keys(ref, n, base)
    cdef Py_ssize_t p = 0, q = 0, na = ka.shape[0], nb = kb.shape[0]
    cdef cnp.int64_t overlap = 0
    while p < na and q < nb:
        if ka[p] == kb[q]:
            overlap += 1
            p += 1
            q += 1
        elif ka[p] < kb[q]:
            p += 1
        else:
            q += 1
    return overlap, na, nb
