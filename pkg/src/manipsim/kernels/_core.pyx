# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot simulation kernels.

Loop order and accumulation order match ``_pure.py`` exactly; do not build
with -ffast-math or the two backends stop agreeing bit-for-bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

cdef enum:
    MAX_POS = 16


cdef void _slate_probs(const double[:, ::1] attrs, const double[::1] exam,
                       double exp_no_choice, double* out) noexcept nogil:
    cdef Py_ssize_t n_pos = exam.shape[0]
    cdef Py_ssize_t n_attr = attrs.shape[1]
    cdef Py_ssize_t k, a, b, t, n_seen, idx
    cdef long mask
    cdef double weight, util, num, denom, regret, diff
    cdef Py_ssize_t seen[MAX_POS]
    cdef double nums[MAX_POS]

    for k in range(n_pos):
        out[k] = 0.0
    for mask in range(1, 1 << n_pos):
        weight = 1.0
        for k in range(n_pos):
            if (mask >> k) & 1:
                weight *= exam[k]
            else:
                weight *= 1.0 - exam[k]
        if weight == 0.0:
            continue
        n_seen = 0
        for k in range(n_pos):
            if (mask >> k) & 1:
                seen[n_seen] = k
                n_seen += 1
        if n_seen == 1:
            k = seen[0]
            util = 0.0
            for t in range(n_attr):
                util -= attrs[k, t]
            num = exp(util)
            out[k] += weight * (num / (exp_no_choice + num))
            continue
        denom = exp_no_choice
        for idx in range(n_seen):
            a = seen[idx]
            regret = 0.0
            for b in range(n_seen):
                if b == idx:
                    continue
                for t in range(n_attr):
                    diff = attrs[a, t] - attrs[seen[b], t]
                    if diff > 0.0:
                        regret += diff
            num = exp(-regret)
            nums[idx] = num
            denom += num
        for idx in range(n_seen):
            out[seen[idx]] += weight * (nums[idx] / denom)


def rrm_slate_probs(attrs, exam, double log_no_choice):
    cdef double[:, ::1] a = np.ascontiguousarray(attrs, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(exam, dtype=np.float64)
    if e.shape[0] > MAX_POS:
        raise ValueError("slate longer than %d positions" % MAX_POS)
    out = np.zeros(e.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        _slate_probs(a, e, exp(log_no_choice), &o[0])
    return out


def rrm_batch_slate_probs(attrs, exam, double log_no_choice):
    cdef double[:, :, ::1] a = np.ascontiguousarray(attrs, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(exam, dtype=np.float64)
    if e.shape[0] > MAX_POS:
        raise ValueError("slate longer than %d positions" % MAX_POS)
    cdef Py_ssize_t n = a.shape[0]
    out = np.zeros((n, e.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i
    cdef double exp_l = exp(log_no_choice)
    if n == 0:
        return out
    with nogil:
        for i in range(n):
            _slate_probs(a[i], e, exp_l, &o[i, 0])
    return out


def planner_values(prefs, qualities, double budget, long horizon, double cost_base,
                   double quality_bonus, double cost_floor, double sharpness,
                   double drift):
    cdef double[::1] pr = np.ascontiguousarray(prefs, dtype=np.float64)
    cdef double[::1] qu = np.ascontiguousarray(qualities, dtype=np.float64)
    cdef Py_ssize_t n = pr.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef long step
    cdef double pref, left, cost_click, total, p
    with nogil:
        for i in range(n):
            pref = pr[i]
            left = budget
            cost_click = cost_base - quality_bonus * qu[i]
            if cost_click < cost_floor:
                cost_click = cost_floor
            total = 0.0
            for step in range(horizon):
                p = 1.0 / (1.0 + exp(-sharpness * (pref - 0.5)))
                total += p
                left -= p * cost_click + (1.0 - p) * cost_base
                pref += p * drift * (1.0 - pref)
                if left <= 0.0:
                    break
            o[i] = total
    return out
