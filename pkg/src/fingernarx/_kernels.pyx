# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, fabs, sqrt

cnp.import_array()

cdef double _INV_SQRT2 = 0.70710678118654752440


cdef inline double _gelu(double x) nogil:
    return 0.5 * x * erfc(-x * _INV_SQRT2)


def median_filter(const unsigned char[:, :] img, int window):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef int r = window // 2
    cdef Py_ssize_t i, j, yy, xx
    cdef int di, dj, k, acc, half = (window * window) // 2
    cdef int hist[256]
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    with nogil:
        for i in range(h):
            for j in range(w):
                for k in range(256):
                    hist[k] = 0
                for di in range(-r, r + 1):
                    yy = i + di
                    if yy < 0:
                        yy = 0
                    elif yy >= h:
                        yy = h - 1
                    for dj in range(-r, r + 1):
                        xx = j + dj
                        if xx < 0:
                            xx = 0
                        elif xx >= w:
                            xx = w - 1
                        hist[img[yy, xx]] += 1
                acc = 0
                for k in range(256):
                    acc = acc + hist[k]
                    if acc > half:
                        break
                out[i, j] = <unsigned char>k
    return out_arr


cdef inline Py_ssize_t _find(Py_ssize_t[:] parent, Py_ssize_t a) nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


cdef inline void _union(Py_ssize_t[:] parent, Py_ssize_t a, Py_ssize_t b) nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label_components(const unsigned char[:, :] mask):
    """8-connected labels, numbered 1..n in raster order of first pixel."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t i, j, nxt = 1, lbl, k
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, :] labels = labels_arr
    parent_arr = np.zeros(h * w // 2 + 2, dtype=np.intp)
    cdef Py_ssize_t[:] parent = parent_arr
    with nogil:
        for i in range(h):
            for j in range(w):
                if not mask[i, j]:
                    continue
                lbl = 0
                if j > 0 and labels[i, j - 1]:
                    lbl = labels[i, j - 1]
                if i > 0:
                    if j > 0 and labels[i - 1, j - 1]:
                        if lbl:
                            _union(parent, lbl, labels[i - 1, j - 1])
                        else:
                            lbl = labels[i - 1, j - 1]
                    if labels[i - 1, j]:
                        if lbl:
                            _union(parent, lbl, labels[i - 1, j])
                        else:
                            lbl = labels[i - 1, j]
                    if j + 1 < w and labels[i - 1, j + 1]:
                        if lbl:
                            _union(parent, lbl, labels[i - 1, j + 1])
                        else:
                            lbl = labels[i - 1, j + 1]
                if not lbl:
                    lbl = nxt
                    parent[nxt] = nxt
                    nxt += 1
                labels[i, j] = <int>lbl
    # compact roots to 1..n in raster order of first appearance
    remap_arr = np.zeros(nxt, dtype=np.intp)
    cdef Py_ssize_t[:] remap = remap_arr
    cdef Py_ssize_t n = 0, root
    with nogil:
        for i in range(h):
            for j in range(w):
                if labels[i, j]:
                    root = _find(parent, labels[i, j])
                    if remap[root] == 0:
                        n += 1
                        remap[root] = n
                    labels[i, j] = <int>remap[root]
    return labels_arr, int(n)


def integrate_plant(const double[:, :] p, double dt, double tau, double width):
    """Critically damped lag plus Duhem-type memory, per chamber.

    Row k of the outputs is the state seen at frame k, before p[k] acts.
    Returns ``(q, qdot, memory)``, each ``(n, 2)``.
    """
    cdef Py_ssize_t n = p.shape[0], k
    cdef int c
    cdef double omega = 1.0 / tau
    cdef double a = exp(-omega * dt) if omega * dt < 700.0 else 0.0
    cdef double e, v, s, qn, vn, dq
    q_arr = np.zeros((n, 2))
    v_arr = np.zeros((n, 2))
    m_arr = np.zeros((n, 2))
    cdef double[:, :] q = q_arr
    cdef double[:, :] qd = v_arr
    cdef double[:, :] m = m_arr
    cdef double qc[2]
    cdef double vc[2]
    cdef double mc[2]
    qc[0] = qc[1] = vc[0] = vc[1] = mc[0] = mc[1] = 0.0
    with nogil:
        for k in range(n):
            for c in range(2):
                q[k, c] = qc[c]
                qd[k, c] = vc[c]
                m[k, c] = mc[c]
                e = qc[c] - p[k, c]
                v = vc[c]
                if a == 0.0:
                    qn = p[k, c]
                    vn = 0.0
                else:
                    s = (v + omega * e) * dt
                    qn = p[k, c] + (e + s) * a
                    vn = (v - omega * s) * a
                if qn < 0.0:
                    qn = 0.0
                    vn = 0.0
                elif qn > 1.0:
                    qn = 1.0
                    vn = 0.0
                dq = fabs(qn - qc[c])
                mc[c] = qn + (mc[c] - qn) * exp(-dq / width)
                qc[c] = qn
                vc[c] = vn
    return q_arr, v_arr, m_arr


def rollout(
    const double[:, ::1] w1, const double[::1] b1,
    const double[:, ::1] w2, const double[::1] b2,
    const double[:, ::1] w3, const double[::1] b3,
    const double[:, :] state_window,
    const double[:, :] exo_window,
    const double[:, ::1] exo_seq,
    teacher=None,
):
    """Self-loop rollout in normalized units.

    ``state_window``: (delays, s) oldest first; ``exo_window``: (delays-1, e)
    oldest first; ``exo_seq``: (T, e) with row t the newest exogenous tap at
    step t. With ``teacher`` (T, s), true states replace the fed-back
    predictions (open-loop evaluation through the identical arithmetic).
    """
    cdef Py_ssize_t delays = state_window.shape[0]
    cdef Py_ssize_t sd = state_window.shape[1]
    cdef Py_ssize_t ed = exo_seq.shape[1]
    cdef Py_ssize_t T = exo_seq.shape[0]
    cdef Py_ssize_t d_in = w1.shape[0], n1 = w1.shape[1], n2 = w2.shape[1], n_out = w3.shape[1]
    cdef Py_ssize_t t, i, j, k, src
    cdef double xi
    cdef bint forced = teacher is not None
    cdef const double[:, :] tch
    if forced:
        tch = np.ascontiguousarray(teacher, dtype=np.float64)
        if tch.shape[0] != T or tch.shape[1] != sd:
            raise ValueError("teacher must have shape (T, state_dim)")
    if d_in != delays * (sd + ed) or n_out != sd or exo_window.shape[0] != delays - 1:
        raise ValueError("window shapes do not match the network input size")
    # ring of states (delays rows, newest at index delays-1) and exo history
    states_arr = np.array(state_window, dtype=np.float64)
    exos_arr = np.zeros((delays, ed))
    if delays > 1:
        exos_arr[: delays - 1] = exo_window
    cdef double[:, :] st = states_arr
    cdef double[:, :] ex = exos_arr
    x_arr = np.empty(d_in)
    h1_arr = np.empty(n1)
    h2_arr = np.empty(n2)
    out_arr = np.empty((T, sd))
    cdef double[::1] x = x_arr
    cdef double[::1] h1 = h1_arr
    cdef double[::1] h2 = h2_arr
    cdef double[:, ::1] out = out_arr
    with nogil:
        for t in range(T):
            for j in range(ed):
                ex[delays - 1, j] = exo_seq[t, j]
            # taps: states newest first, then exo newest first
            for k in range(delays):
                src = delays - 1 - k
                for j in range(sd):
                    x[k * sd + j] = st[src, j]
                for j in range(ed):
                    x[delays * sd + k * ed + j] = ex[src, j]
            for j in range(n1):
                h1[j] = b1[j]
            for i in range(d_in):
                xi = x[i]
                for j in range(n1):
                    h1[j] += xi * w1[i, j]
            for j in range(n1):
                h1[j] = _gelu(h1[j])
            for j in range(n2):
                h2[j] = b2[j]
            for i in range(n1):
                xi = h1[i]
                for j in range(n2):
                    h2[j] += xi * w2[i, j]
            for j in range(n2):
                h2[j] = _gelu(h2[j])
            for j in range(n_out):
                out[t, j] = b3[j]
            for i in range(n2):
                xi = h2[i]
                for j in range(n_out):
                    out[t, j] += xi * w3[i, j]
            # shift histories
            for k in range(delays - 1):
                for j in range(sd):
                    st[k, j] = st[k + 1, j]
                for j in range(ed):
                    ex[k, j] = ex[k + 1, j]
            for j in range(sd):
                st[delays - 1, j] = tch[t, j] if forced else out[t, j]
    return out_arr
