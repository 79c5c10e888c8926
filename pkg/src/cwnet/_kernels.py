"""Compiled kernels for cellular attention over the real cells of a batch.

Cells of dimension k from every complex are stacked into one axis of length
``T`` (``T_lo`` for dimension k-1).  Shapes, with ``R`` complexes, ``D``
neighbour slots and state width ``N``::

    u        (R, N)          W_k m per complex, m the real-cell indicator
    v        (N_k, N)        top half of the score map, one row per cell slot
    owner    (T,)            complex of each k-cell
    slot     (T,)            position of each k-cell inside its complex
    keys     (T_lo, N, N)    m_j a_bot per lower cell
    messages (T_lo, N, N)    B_k^T W_{k-1} h_j B_k per lower cell
    index    (T, D)          row of each neighbour in keys/messages
    valid    (T, D)          1 for a real neighbour, 0 for an empty slot

Every query state is rank one, so the query half of the score of cell ``t``
is the outer product ``u[owner[t]] v[slot[t]]^T``.  The score against
neighbour ``j`` is ``LeakyReLU(query_t + keys_j)``; the coefficients are the
entrywise softmax of the scores over the valid slots, and the update is
``LeakyReLU(sum_j alpha_tj @ messages_j)``.  A cell without neighbours gets
zeros.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .numerics import LEAKY_SLOPE


@njit(cache=True)
def _shifted_scores(u, v, owner, slot, keys, index, valid, slope):
    """LeakyReLU scores minus their max over the neighbourhood; -inf in empty slots."""
    n_cells, slots = index.shape
    n = u.shape[1]
    out = np.full((n_cells, slots, n, n), -np.inf)
    top = np.empty(n)
    for i in range(n_cells):
        b, s = owner[i], slot[i]
        for r in range(n):
            top[:] = -np.inf
            for d in range(slots):
                if valid[i, d] == 0:
                    continue
                j = index[i, d]
                for c in range(n):
                    z = u[b, r] * v[s, c] + keys[j, r, c]
                    y = max(z, slope * z)
                    out[i, d, r, c] = y
                    top[c] = max(top[c], y)
            for d in range(slots):
                if valid[i, d] == 0:
                    continue
                for c in range(n):
                    out[i, d, r, c] -= top[c]
    return out


@njit(cache=True)
def _normalise_and_apply(alpha, messages, index, valid, slope):
    """Turn exponentiated scores into coefficients in place; LeakyReLU of sum alpha_ij @ m_j."""
    n_cells, slots, n, _ = alpha.shape
    out = np.zeros((n_cells, n, n))
    total = np.empty(n)
    for i in range(n_cells):
        for r in range(n):
            total[:] = 0.0
            for d in range(slots):
                if valid[i, d] > 0:
                    for c in range(n):
                        total[c] += alpha[i, d, r, c]
            for d in range(slots):
                if valid[i, d] == 0:
                    continue
                j = index[i, d]
                for t in range(n):
                    a = alpha[i, d, r, t] / total[t]
                    alpha[i, d, r, t] = a
                    for c in range(n):
                        out[i, r, c] += a * messages[j, t, c]
            for c in range(n):
                x = out[i, r, c]
                out[i, r, c] = max(x, slope * x)
    return out


@njit(cache=True)
def _backward(grad_out, out, alpha, u, v, owner, slot, keys, messages_t, index, valid, slope):
    n_cells, slots = index.shape
    n = u.shape[1]
    g_u = np.zeros(u.shape)
    g_v = np.zeros(v.shape)
    g_keys = np.zeros(keys.shape)
    g_messages = np.zeros(messages_t.shape)
    g_alpha = np.zeros((slots, n))
    weighted = np.empty(n)
    grad = np.empty(n)
    g_query = np.empty(n)
    for i in range(n_cells):
        b, s = owner[i], slot[i]
        for r in range(n):
            for c in range(n):
                g = grad_out[i, r, c]
                grad[c] = g if out[i, r, c] > 0 else slope * g
            weighted[:] = 0.0
            for d in range(slots):
                if valid[i, d] == 0:
                    continue
                j = index[i, d]
                g_alpha[d, :] = 0.0
                for c in range(n):
                    gc = grad[c]
                    for t in range(n):
                        g_alpha[d, t] += gc * messages_t[j, c, t]
                for t in range(n):
                    a = alpha[i, d, r, t]
                    weighted[t] += a * g_alpha[d, t]
                    for c in range(n):
                        g_messages[j, t, c] += a * grad[c]
            g_query[:] = 0.0
            for d in range(slots):
                if valid[i, d] == 0:
                    continue
                j = index[i, d]
                for t in range(n):
                    g = alpha[i, d, r, t] * (g_alpha[d, t] - weighted[t])
                    if u[b, r] * v[s, t] + keys[j, r, t] <= 0:
                        g *= slope
                    g_query[t] += g
                    g_keys[j, r, t] += g
            acc = 0.0
            for t in range(n):
                acc += g_query[t] * v[s, t]
                g_v[s, t] += g_query[t] * u[b, r]
            g_u[b, r] += acc
    return g_u, g_v, g_keys, g_messages


def cell_attention(u, v, owner, slot, keys, messages, index, valid):
    """Forward pass; returns the updates and the coefficients for the adjoint."""
    alpha = _shifted_scores(u, v, owner, slot, keys, index, valid, LEAKY_SLOPE)
    # numpy's vectorised exp is several times faster than the compiled scalar one
    np.exp(alpha, out=alpha)
    return _normalise_and_apply(alpha, messages, index, valid, LEAKY_SLOPE), alpha


def cell_attention_vjp(grad, out, alpha, u, v, owner, slot, keys, messages, index, valid):
    """Gradients with respect to ``u``, ``v``, ``keys`` and ``messages``."""
    # transposed messages keep the innermost loop contiguous
    messages_t = np.ascontiguousarray(np.swapaxes(messages, -1, -2))
    return _backward(
        np.ascontiguousarray(grad), out, alpha, u, v, owner, slot, keys, messages_t, index, valid, LEAKY_SLOPE
    )
