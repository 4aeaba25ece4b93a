# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential calibration kernels.

Twin of `_kernels_py`; see that module for the shared arithmetic recipe
(accumulation order, decay table, quantile walk). Any semantic change
must land in both files.

Instead of sorting each window from scratch, the window is kept sorted
across steps: the newest score is inserted at the end of its tie run
and the expiring score leaves from the front of its run, which is
exactly the ordering a stable value sort of the date-ordered window
produces. Weight sums still accumulate in date order, and the quantile
walk accumulates in value order, matching the reference backend term
for term.
"""

from libc.math cimport exp, isinf
from libc.stdlib cimport malloc, free
from libc.string cimport memmove

import numpy as np

BACKEND_NAME = "compiled"


cdef struct Win:
    double* vals
    Py_ssize_t* idxs
    Py_ssize_t size


cdef inline Py_ssize_t _upper_bound(double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _lower_bound(double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline void _win_insert(Win* w, double v, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t pos = _upper_bound(w.vals, w.size, v)
    memmove(w.vals + pos + 1, w.vals + pos, (w.size - pos) * sizeof(double))
    memmove(w.idxs + pos + 1, w.idxs + pos, (w.size - pos) * sizeof(Py_ssize_t))
    w.vals[pos] = v
    w.idxs[pos] = idx
    w.size += 1


cdef inline void _win_remove(Win* w, double v, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t pos = _lower_bound(w.vals, w.size, v)
    while pos < w.size and w.idxs[pos] != idx:
        pos += 1
    if pos >= w.size:
        return
    memmove(w.vals + pos, w.vals + pos + 1, (w.size - pos - 1) * sizeof(double))
    memmove(w.idxs + pos, w.idxs + pos + 1, (w.size - pos - 1) * sizeof(Py_ssize_t))
    w.size -= 1


def run_weighted_conformal(
    double[::1] scores,
    double[:, ::1] z,
    int use_kernel,
    Py_ssize_t first,
    Py_ssize_t start,
    Py_ssize_t stop,
    Py_ssize_t m,
    double lam,
    double h,
    double n_min,
    double alpha,
    int correction,
):
    cdef Py_ssize_t k = stop - start
    chat_arr = np.empty(k)
    neff_arr = np.empty(k)
    tau_arr = np.empty(k)
    fb_arr = np.zeros(k, dtype=np.int8)
    decay_arr = np.empty(m + 1)
    cdef double[::1] chat = chat_arr
    cdef double[::1] neff = neff_arr
    cdef double[::1] tau = tau_arr
    cdef signed char[::1] fb = fb_arr
    cdef double[::1] decay = decay_arr

    cdef Py_ssize_t lag, t, lo, lo_t, nb, i, j, dd, out
    cdef Py_ssize_t d = z.shape[1]
    cdef double inv_h2 = 0.0
    cdef double wt, d2, diff, total, sq, t1, level, target, cum
    cdef int code

    for lag in range(m + 1):
        decay[lag] = exp(-lam * lag)
    if use_kernel and not isinf(h):
        inv_h2 = 1.0 / (h * h)

    cdef Win win
    win.vals = <double*> malloc((m + 1) * sizeof(double))
    win.idxs = <Py_ssize_t*> malloc((m + 1) * sizeof(Py_ssize_t))
    cdef double* wdate = <double*> malloc(m * sizeof(double))
    if win.vals == NULL or win.idxs == NULL or wdate == NULL:
        free(win.vals)
        free(win.idxs)
        free(wdate)
        raise MemoryError()
    win.size = 0

    try:
        lo = start - m
        if lo < first:
            lo = first
        for i in range(lo, start - 1):
            _win_insert(&win, scores[i], i)
        out = 0
        for t in range(start, stop):
            _win_insert(&win, scores[t - 1], t - 1)
            lo_t = t - m
            if lo_t < first:
                lo_t = first
            while lo < lo_t:
                _win_remove(&win, scores[lo], lo)
                lo += 1
            nb = win.size

            code = 0
            total = 0.0
            for i in range(nb):
                wt = decay[nb - i]
                if inv_h2 > 0.0:
                    d2 = 0.0
                    for dd in range(d):
                        diff = z[lo + i, dd] - z[t, dd]
                        d2 += diff * diff
                    wt *= exp(-0.5 * d2 * inv_h2)
                wdate[i] = wt
                total += wt
            if total <= 0.0:
                for i in range(nb):
                    wdate[i] = 1.0
                total = <double> nb
                code = 2
            elif inv_h2 > 0.0 and n_min > 0.0:
                # safeguard only bites while the similarity kernel is
                # active; at h = inf there is no kernel to drop
                sq = 0.0
                for i in range(nb):
                    sq += wdate[i] * wdate[i]
                if total * total / sq < n_min:
                    total = 0.0
                    for i in range(nb):
                        wdate[i] = decay[nb - i]
                        total += wdate[i]
                    code = 1
                    if total <= 0.0:
                        for i in range(nb):
                            wdate[i] = 1.0
                        total = <double> nb
                        code = 2
            sq = 0.0
            for i in range(nb):
                sq += wdate[i] * wdate[i]
            t1 = 0.0
            for i in range(nb):
                t1 += wdate[i] * (nb - i)
            neff[out] = total * total / sq
            tau[out] = t1 / total
            fb[out] = <signed char> code

            if correction:
                level = (1.0 - alpha) * (1.0 + 1.0 / total)
                if level > 1.0:
                    level = 1.0
            else:
                level = 1.0 - alpha
            target = level * total

            cum = 0.0
            chat[out] = win.vals[nb - 1]
            for j in range(nb):
                cum += wdate[win.idxs[j] - lo]
                if cum >= target and (j == nb - 1 or win.vals[j + 1] != win.vals[j]):
                    chat[out] = win.vals[j]
                    break
            out += 1
    finally:
        free(win.vals)
        free(win.idxs)
        free(wdate)
    return chat_arr, neff_arr, tau_arr, fb_arr


def run_aci(
    double[::1] scores,
    Py_ssize_t first,
    Py_ssize_t start,
    Py_ssize_t stop,
    Py_ssize_t m,
    double alpha,
    double gamma,
    double alpha_min,
    double alpha_max,
):
    cdef Py_ssize_t k = stop - start
    chat_arr = np.empty(k)
    alpha_arr = np.empty(k)
    cdef double[::1] chat = chat_arr
    cdef double[::1] alpha_hist = alpha_arr

    cdef Py_ssize_t t, lo, lo_t, nb, i, j, out
    cdef double a = alpha
    cdef double c, ex, target

    cdef Win win
    win.vals = <double*> malloc((m + 1) * sizeof(double))
    win.idxs = <Py_ssize_t*> malloc((m + 1) * sizeof(Py_ssize_t))
    if win.vals == NULL or win.idxs == NULL:
        free(win.vals)
        free(win.idxs)
        raise MemoryError()
    win.size = 0

    try:
        lo = start - m
        if lo < first:
            lo = first
        for i in range(lo, start - 1):
            _win_insert(&win, scores[i], i)
        out = 0
        for t in range(start, stop):
            _win_insert(&win, scores[t - 1], t - 1)
            lo_t = t - m
            if lo_t < first:
                lo_t = first
            while lo < lo_t:
                _win_remove(&win, scores[lo], lo)
                lo += 1
            nb = win.size

            alpha_hist[out] = a
            target = (1.0 - a) * nb
            c = win.vals[nb - 1]
            for j in range(nb):
                if (j + 1.0) >= target and (j == nb - 1 or win.vals[j + 1] != win.vals[j]):
                    c = win.vals[j]
                    break
            chat[out] = c
            ex = 1.0 if scores[t] > c else 0.0
            a = a + gamma * (alpha - ex)
            if a < alpha_min:
                a = alpha_min
            if a > alpha_max:
                a = alpha_max
            out += 1
    finally:
        free(win.vals)
        free(win.idxs)
    return chat_arr, alpha_arr
