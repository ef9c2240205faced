"""NumPy implementations of the inner loops in ``_kernels.pyx``.

Used when the extension is not built, or when ``FINGERNARX_PURE=1``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erfc

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def median_filter(img: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    padded = np.pad(np.asarray(img, dtype=np.uint8), r, mode="edge")
    views = sliding_window_view(padded, (window, window))
    return np.median(views.reshape(*views.shape[:2], -1), axis=-1).astype(np.uint8)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labels via run-length union-find; same numbering as the kernel."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    parent: list[int] = [0]

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    runs_per_row = []
    prev: list[tuple[int, int, int]] = []
    for i in range(h):
        row = mask[i].astype(np.int8)
        edges = np.flatnonzero(np.diff(np.concatenate(([0], row, [0]))))
        cur = []
        for start, stop in zip(edges[::2], edges[1::2]):
            lbl = 0
            for ps, pe, pl in prev:
                # half-open runs; 8-connectivity lets them touch diagonally
                if ps <= stop and pe >= start:
                    if lbl:
                        a, b = find(lbl), find(pl)
                        if a < b:
                            parent[b] = a
                        elif b < a:
                            parent[a] = b
                    else:
                        lbl = pl
            if not lbl:
                lbl = len(parent)
                parent.append(lbl)
            cur.append((int(start), int(stop), lbl))
        runs_per_row.append(cur)
        prev = cur

    labels = np.zeros((h, w), dtype=np.int32)
    remap: dict[int, int] = {}
    for i, runs in enumerate(runs_per_row):
        for start, stop, lbl in runs:
            root = find(lbl)
            if root not in remap:
                remap[root] = len(remap) + 1
            labels[i, start:stop] = remap[root]
    return labels, len(remap)


def integrate_plant(p: np.ndarray, dt: float, tau: float, width: float):
    p = np.asarray(p, dtype=float)
    n = len(p)
    omega = 1.0 / tau
    a = math.exp(-omega * dt) if omega * dt < 700.0 else 0.0
    q_out = np.zeros((n, 2))
    v_out = np.zeros((n, 2))
    m_out = np.zeros((n, 2))
    qc = [0.0, 0.0]
    vc = [0.0, 0.0]
    mc = [0.0, 0.0]
    for k in range(n):
        for c in range(2):
            q_out[k, c] = qc[c]
            v_out[k, c] = vc[c]
            m_out[k, c] = mc[c]
            pk = float(p[k, c])
            e = qc[c] - pk
            v = vc[c]
            if a == 0.0:
                qn, vn = pk, 0.0
            else:
                s = (v + omega * e) * dt
                qn = pk + (e + s) * a
                vn = (v - omega * s) * a
            if qn < 0.0:
                qn, vn = 0.0, 0.0
            elif qn > 1.0:
                qn, vn = 1.0, 0.0
            dq = abs(qn - qc[c])
            mc[c] = qn + (mc[c] - qn) * math.exp(-dq / width)
            qc[c] = qn
            vc[c] = vn
    return q_out, v_out, m_out


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * erfc(-x * _INV_SQRT2)


def rollout(w1, b1, w2, b2, w3, b3, state_window, exo_window, exo_seq, teacher=None):
    state_window = np.asarray(state_window, dtype=float)
    exo_seq = np.asarray(exo_seq, dtype=float)
    delays, sd = state_window.shape
    T, ed = exo_seq.shape
    if w1.shape[0] != delays * (sd + ed) or w3.shape[1] != sd or len(exo_window) != delays - 1:
        raise ValueError("window shapes do not match the network input size")
    if teacher is not None:
        teacher = np.asarray(teacher, dtype=float)
        if teacher.shape != (T, sd):
            raise ValueError("teacher must have shape (T, state_dim)")
    states = [row.copy() for row in state_window]
    exos = [np.asarray(row, dtype=float) for row in exo_window]
    out = np.empty((T, sd))
    for t in range(T):
        exos.append(exo_seq[t])
        x = np.concatenate(states[::-1] + exos[::-1])
        h1 = _gelu(x @ w1 + b1)
        h2 = _gelu(h1 @ w2 + b2)
        y = h2 @ w3 + b3
        out[t] = y
        states.pop(0)
        exos.pop(0)
        states.append(teacher[t] if teacher is not None else y)
    return out
