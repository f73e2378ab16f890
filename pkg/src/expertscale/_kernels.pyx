# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must stay bit-identical to ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t, INT64_MAX

cnp.import_array()

BACKEND = "cython"


def route_topk(double[::1] weights, double[:, ::1] uniforms):
    """Count expert hits when every row of ``uniforms`` draws ``k`` distinct
    experts by sequential inverse-CDF sampling without replacement."""
    cdef Py_ssize_t n_experts = weights.shape[0]
    cdef Py_ssize_t n_tokens = uniforms.shape[0]
    cdef Py_ssize_t k = uniforms.shape[1]
    cdef Py_ssize_t t, j, e, chosen, last_pos
    cdef double total, target, cum
    counts = np.zeros(n_experts, dtype=np.int64)
    cdef int64_t[::1] out = counts
    cdef double *rem = <double *> malloc(n_experts * sizeof(double))
    if rem == NULL:
        raise MemoryError()
    try:
        for t in range(n_tokens):
            for e in range(n_experts):
                rem[e] = weights[e]
            for j in range(k):
                total = 0.0
                for e in range(n_experts):
                    total = total + rem[e]
                target = uniforms[t, j] * total
                cum = 0.0
                chosen = -1
                last_pos = -1
                for e in range(n_experts):
                    cum = cum + rem[e]
                    if rem[e] > 0.0:
                        last_pos = e
                        if cum > target:
                            chosen = e
                            break
                if chosen < 0:
                    chosen = last_pos
                out[chosen] += 1
                rem[chosen] = 0.0
    finally:
        free(rem)
    return counts


cdef void _search(int64_t *sizes, Py_ssize_t n, Py_ssize_t i, int n_gpus,
                  int slot_cap, int used, int64_t cur_max, int64_t *load,
                  int *count, int *assign, int64_t *best, int *best_assign) nogil:
    cdef int g, limit
    cdef int64_t new_max
    cdef Py_ssize_t m
    if i == n:
        best[0] = cur_max
        for m in range(n):
            best_assign[m] = assign[m]
        return
    limit = used + 1
    if limit > n_gpus:
        limit = n_gpus
    for g in range(limit):
        if count[g] >= slot_cap:
            continue
        load[g] += sizes[i]
        new_max = load[g] if load[g] > cur_max else cur_max
        if new_max < best[0]:
            count[g] += 1
            assign[i] = g
            _search(sizes, n, i + 1, n_gpus, slot_cap,
                    used + 1 if g == used else used,
                    new_max, load, count, assign, best, best_assign)
            count[g] -= 1
        load[g] -= sizes[i]


def min_makespan(int64_t[::1] sizes, int n_gpus, int slot_cap):
    """Exact minimum makespan of integer ``sizes`` on identical GPUs holding at
    most ``slot_cap`` items each. Returns ``(makespan, assignment)`` for the
    lexicographically first optimal assignment, or ``(-1, None)`` if none fits."""
    cdef Py_ssize_t n = sizes.shape[0]
    cdef int64_t best = INT64_MAX
    cdef int64_t *load = <int64_t *> malloc((n_gpus + 1) * sizeof(int64_t))
    cdef int *count = <int *> malloc((n_gpus + 1) * sizeof(int))
    cdef int *assign = <int *> malloc((n + 1) * sizeof(int))
    cdef int *best_assign = <int *> malloc((n + 1) * sizeof(int))
    cdef Py_ssize_t m
    if n == 0:
        free(load); free(count); free(assign); free(best_assign)
        return 0, []
    if load == NULL or count == NULL or assign == NULL or best_assign == NULL:
        free(load); free(count); free(assign); free(best_assign)
        raise MemoryError()
    try:
        for m in range(n_gpus):
            load[m] = 0
            count[m] = 0
        with nogil:
            _search(&sizes[0], n, 0, n_gpus, slot_cap, 0, 0,
                    load, count, assign, &best, best_assign)
        if best == INT64_MAX:
            return -1, None
        return int(best), [best_assign[m] for m in range(n)]
    finally:
        free(load); free(count); free(assign); free(best_assign)
