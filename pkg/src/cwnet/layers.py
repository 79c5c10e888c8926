"""CW-CNN and CW-AT building blocks on the autodiff tape.

Two code paths exist for attention.  The per-cell functions
(:func:`attention_score`, :func:`csoftmax`, :func:`attention_update`,
:func:`multihead_update`) follow the definitions literally for one cell of one
complex and serve as the reference.  :func:`cwat_forward` runs the same
computation vectorised over every cell of every complex in a
:class:`ComplexBatch`; the test-suite checks the two against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from . import numerics as nx
from .complex import ComplexError, CWComplex
from .numerics import Tensor

__all__ = [
    "AttentionHeadParams",
    "ComplexBatch",
    "CwAtConfig",
    "CwCnnConfig",
    "Params",
    "attention_score",
    "attention_update",
    "csoftmax",
    "cwat_forward",
    "cwcnn_forward",
    "cwcnn_layer",
    "dropout",
    "hodge_laplacian_tape",
    "init_attention_state",
    "init_cwat",
    "init_cwcnn",
    "layer_norm",
    "multihead_update",
]

LAYER_NORM_EPS = 1e-5


class Params(dict):
    """Ordered ``name -> Tensor`` map of learnable parameters."""

    def count(self) -> int:
        return int(sum(t.data.size for t in self.values()))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, arr in arrays.items():
            self[k].data[...] = arr


def _param(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _he(rng: np.random.Generator, rows: int, cols: int, fan_in: int | None = None) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in or rows, 1)), size=(rows, cols))


# ------------------------------------------------------------------ batches


class ComplexBatch:
    """Incidence data for one complex or a stack of equally padded complexes.

    Arrays keep a leading batch axis only when built from a sequence, so a
    single complex flows through every layer as plain 2-D matrices.
    """

    def __init__(self, complexes: CWComplex | Sequence[CWComplex]):
        single = isinstance(complexes, CWComplex)
        cxs = [complexes] if single else list(complexes)
        if not cxs:
            raise ValueError("empty batch")
        first = cxs[0]
        for cx in cxs[1:]:
            if cx.skeleton_sizes != first.skeleton_sizes:
                raise ValueError(
                    f"batched complexes need one padded profile: {cx.skeleton_sizes} vs {first.skeleton_sizes}"
                )
        self.single = single
        self.size = len(cxs)
        self.dimension = first.dimension
        self.sizes = first.skeleton_sizes
        pick = (lambda xs: xs[0]) if single else np.stack
        # index k holds B_k; index 0 is unused
        self.B: list[np.ndarray | None] = [None] + [
            pick([cx.incidence[k - 1].astype(np.float64) for cx in cxs]) for k in range(1, self.dimension + 1)
        ]
        self.Bt: list[np.ndarray | None] = [None] + [np.swapaxes(b, -1, -2).copy() for b in self.B[1:]]
        self.mask = [pick([cx.cell_mask(k) for cx in cxs]) for k in range(self.dimension + 1)]
        self.real_sizes = np.array([cx.real_sizes for cx in cxs])
        self._cache: dict[tuple, tuple] = {}

    @property
    def lead(self) -> tuple[int, ...]:
        return () if self.single else (self.size,)

    def stacked_B(self, k: int) -> np.ndarray:
        return self.B[k][None] if self.single else self.B[k]

    def stacked_Bt(self, k: int) -> np.ndarray:
        return self.Bt[k][None] if self.single else self.Bt[k]

    def masked_identity(self, k: int) -> np.ndarray:
        m = self.mask[k]
        return m[..., :, None] * np.eye(self.sizes[k])

    def degree_matrix(self, k: int) -> np.ndarray:
        """``diag`` of the number of incident (k+1)- and (k-1)-cells per k-cell."""
        deg = np.zeros(self.lead + (self.sizes[k],))
        if k >= 1:
            deg += np.abs(self.B[k]).sum(axis=-2)
        if k < self.dimension:
            deg += np.abs(self.B[k + 1]).sum(axis=-1)
        return deg[..., :, None] * np.eye(self.sizes[k])

    def cells(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(owner, slot)`` of every real k-cell, complexes in order.

        Real cells occupy the leading indices of each dimension, so the
        cells of complex ``b`` form one contiguous run.
        """
        if ("cells", k) not in self._cache:
            counts = self.real_sizes[:, k]
            owner = np.repeat(np.arange(self.size), counts)
            starts = np.cumsum(counts) - counts
            slot = np.arange(owner.size) - np.repeat(starts, counts)
            self._cache[("cells", k)] = (owner, slot)
        return self._cache[("cells", k)]

    def cell_neighbors(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Incident (k-1)-cells of every real k-cell, as rows of the stacked (k-1)-cells.

        Returns ``(index, valid)`` of shape ``(T_k, D)``; ``D`` is the largest
        neighbourhood and ``valid`` marks the used slots (unused slots hold 0).
        """
        if ("nbr", k) not in self._cache:
            owner, slot = self.cells(k)
            counts = self.real_sizes[:, k - 1]
            starts = np.cumsum(counts) - counts
            inc = self.B[k] != 0
            if self.single:
                inc = inc[None]
            cols = inc[owner, :, slot]  # (T_k, N_{k-1})
            width = max(1, int(cols.sum(axis=1).max(initial=0)))
            index = np.zeros((owner.size, width), dtype=np.int64)
            valid = np.zeros((owner.size, width))
            for t, row in enumerate(cols):
                lower = np.flatnonzero(row)
                index[t, : lower.size] = starts[owner[t]] + lower
                valid[t, : lower.size] = 1.0
            self._cache[("nbr", k)] = (index, valid)
        return self._cache[("nbr", k)]


def as_batch(x: CWComplex | ComplexBatch) -> ComplexBatch:
    return x if isinstance(x, ComplexBatch) else ComplexBatch(x)


# ------------------------------------------------------------- Hodge on tape


def hodge_laplacian_tape(batch: ComplexBatch, k: int, weights: Sequence[Tensor]) -> Tensor:
    """``Delta_k`` assembled from learnable diagonal weights (each a 1 x N row)."""
    n = batch.dimension
    if not 0 <= k <= n:
        raise ComplexError(f"k={k} out of range 0..{n}")
    out = None
    if k > 0:
        inv = nx.pinv_diag(weights[k - 1])
        # B_k^T W_{k-1}^+ B_k W_k
        out = nx.hadamard(nx.matmul(nx.hadamard(batch.Bt[k], inv), batch.B[k]), weights[k])
    if k < n:
        inv = nx.transpose(nx.pinv_diag(weights[k]))
        # W_k^+ B_{k+1} W_{k+1} B_{k+1}^T
        up = nx.hadamard(inv, nx.matmul(nx.hadamard(batch.B[k + 1], weights[k + 1]), batch.Bt[k + 1]))
        out = up if out is None else nx.add(out, up)
    if out is None:
        out = Tensor(np.zeros(batch.lead + (batch.sizes[k], batch.sizes[k])))
    return out


# ------------------------------------------------------------------ CW-CNN


@dataclass(frozen=True)
class CwCnnConfig:
    profile: tuple[int, ...] = (8, 12, 6)
    activations: tuple[str, ...] = ()
    feature_map: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "profile", tuple(int(x) for x in self.profile))
        if len(self.profile) < 2:
            raise ValueError("CW-CNN needs a complex of dimension >= 1")
        if not self.activations:
            object.__setattr__(self, "activations", ("gelu",) * (len(self.profile) - 1))
        if len(self.activations) != len(self.profile) - 1:
            raise ValueError(f"need {len(self.profile) - 1} layer activations, got {len(self.activations)}")
        for a in self.activations:
            if a not in nx.ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.feature_map not in ("identity", "degree"):
            raise ValueError("feature_map must be 'identity' or 'degree'")

    @property
    def dimension(self) -> int:
        return len(self.profile) - 1


def init_cwcnn(config: CwCnnConfig, rng: np.random.Generator) -> Params:
    """Hodge weights ~ U(0.5, 1.5); dense maps He-normal; biases zero."""
    p = Params()
    for k, size in enumerate(config.profile):
        p[f"hodge_w{k}"] = _param(rng.uniform(0.5, 1.5, size=(1, size)), f"hodge_w{k}")
    top = config.profile[-1]
    p["readout_w"] = _param(_he(rng, top, 1), "readout_w")
    p["readout_b"] = _param(np.zeros((1, 1)), "readout_b")
    p["out_w"] = _param(_he(rng, 1, 1), "out_w")
    p["out_b"] = _param(np.zeros((1, 1)), "out_b")
    return p


def _hodge_weights(params: Params, n: int) -> list[Tensor]:
    return [params[f"hodge_w{k}"] for k in range(n + 1)]


def cwcnn_layer(
    H: Tensor,
    batch: CWComplex | ComplexBatch,
    k: int,
    params: Params,
    act: str = "gelu",
    feature_map: np.ndarray | None = None,
) -> Tensor:
    """``sigma(B_{k+1}^T Delta_k A_k H B_{k+1})``: N_k x N_k -> N_{k+1} x N_{k+1}."""
    batch = as_batch(batch)
    n = batch.dimension
    if not 0 <= k < n:
        raise ComplexError(f"cwcnn_layer needs 0 <= k < {n}, got k={k} (no B_{k + 1})")
    size = batch.sizes[k]
    if H.shape[-2:] != (size, size):
        raise ValueError(f"H must be {size} x {size} at k={k}, got {H.shape}")
    lap = hodge_laplacian_tape(batch, k, _hodge_weights(params, n))
    inner = nx.matmul(lap, H) if feature_map is None else nx.matmul(lap, nx.matmul(feature_map, H))
    pre = nx.matmul(nx.matmul(batch.Bt[k + 1], inner), batch.B[k + 1])
    return nx.activation(pre, act)


def feature_maps(batch: ComplexBatch, kind: str) -> list[np.ndarray | None]:
    if kind == "identity":
        return [None] * (batch.dimension + 1)
    return [batch.degree_matrix(k) for k in range(batch.dimension + 1)]


def cwcnn_hidden(batch: CWComplex | ComplexBatch, params: Params, config: CwCnnConfig) -> list[Tensor]:
    batch = as_batch(batch)
    if batch.dimension < 1:
        raise ComplexError("CW-CNN needs a complex of dimension >= 1")
    maps = feature_maps(batch, config.feature_map)
    hidden = [Tensor(batch.masked_identity(0))]
    for k in range(batch.dimension):
        hidden.append(cwcnn_layer(hidden[-1], batch, k, params, config.activations[k], maps[k]))
    return hidden


def cwcnn_forward(batch: CWComplex | ComplexBatch, params: Params, config: CwCnnConfig) -> Tensor:
    """Stacked layers, masked row-mean pooling of the top state, linear, GELU, scalar map.

    Returns ``(1, 1)`` for a single complex, ``(B, 1, 1)`` for a batch.
    """
    batch = as_batch(batch)
    top = cwcnn_hidden(batch, params, config)[-1]
    pooled = nx.hadamard(nx.row_mean(top), batch.mask[-1][..., :, None])
    z = nx.add(nx.matmul(nx.transpose(pooled), params["readout_w"]), params["readout_b"])
    return nx.add(nx.matmul(nx.activation(z, "gelu"), params["out_w"]), params["out_b"])


# ------------------------------------------------------------------- CW-AT


@dataclass
class AttentionHeadParams:
    """One attention head: dense ``W_k`` for k = 0..n and score maps ``a_k`` for k = 1..n."""

    W: list[Tensor]
    a: list[Tensor | None] = field(default_factory=list)


@dataclass(frozen=True)
class CwAtConfig:
    profile: tuple[int, ...] = (8, 12, 6)
    heads: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "profile", tuple(int(x) for x in self.profile))
        if len(self.profile) < 2:
            raise ValueError("CW-AT needs a complex of dimension >= 1")
        if self.heads < 1:
            raise ValueError("need at least one attention head")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout rate must lie in [0, 1)")

    @property
    def dimension(self) -> int:
        return len(self.profile) - 1


BRANCHES = 2


def init_cwat(config: CwAtConfig, rng: np.random.Generator) -> Params:
    p = Params()
    prof, K = config.profile, config.heads
    for br in range(BRANCHES):
        for h in range(K):
            for k, size in enumerate(prof):
                name = f"b{br}.h{h}.W{k}"
                p[name] = _param(_he(rng, size, size), name)
            for k in range(1, len(prof)):
                name = f"b{br}.h{h}.a{k}"
                p[name] = _param(_he(rng, 2 * prof[k], prof[k]), name)
        for k in range(1, len(prof)):
            size = prof[k]
            pre = f"b{br}.L{k}."
            p[pre + "proj"] = _param(np.tile(np.eye(size), (K, 1)) / K, pre + "proj")
            p[pre + "ff_w1"] = _param(_he(rng, size, size), pre + "ff_w1")
            p[pre + "ff_b1"] = _param(np.zeros((1, size)), pre + "ff_b1")
            p[pre + "ff_w2"] = _param(_he(rng, size, size), pre + "ff_w2")
            p[pre + "ff_b2"] = _param(np.zeros((1, size)), pre + "ff_b2")
            p[pre + "ln_gain"] = _param(np.ones((1, size)), pre + "ln_gain")
            p[pre + "ln_bias"] = _param(np.zeros((1, size)), pre + "ln_bias")
    top = prof[-1]
    p["readout_w"] = _param(_he(rng, top, 1), "readout_w")
    p["readout_b"] = _param(np.zeros((1, 1)), "readout_b")
    return p


def head_params(params: Params, branch: int, head: int, n: int) -> AttentionHeadParams:
    pre = f"b{branch}.h{head}."
    return AttentionHeadParams(
        W=[params[f"{pre}W{k}"] for k in range(n + 1)],
        a=[None] + [params[f"{pre}a{k}"] for k in range(1, n + 1)],
    )


def init_attention_state(complex_: CWComplex | ComplexBatch, k: int = 0) -> list[Tensor]:
    """Rank-one starting states ``x 1_i^T``, one per k-cell.

    ``x`` is the real-cell indicator of dimension ``k`` (all ones on an
    unpadded complex), so state ``i`` carries it in column ``i``.
    """
    batch = as_batch(complex_)
    return [Tensor(s) for s in _rank_one_states(batch, k)]


def _rank_one_states(batch: ComplexBatch, k: int) -> np.ndarray:
    """``(..., N_k, N_k, N_k)`` array; slot ``i`` is ``mask 1_i^T`` (zero for padding cells)."""
    size = batch.sizes[k]
    m = batch.mask[k]
    eye = np.eye(size)
    # out[..., i, r, c] = m[r] * eye[i, c] * m[i]
    return m[..., :, None, None] * m[..., None, :, None] * eye[:, None, :]


def _message(h_j: Tensor, batch: ComplexBatch, k: int, head: AttentionHeadParams) -> Tensor:
    """``B_k^T W_{k-1} h_j B_k``."""
    return nx.matmul(nx.matmul(nx.matmul(batch.Bt[k], head.W[k - 1]), h_j), batch.B[k])


def attention_score(
    h_i: Tensor,
    h_j: Tensor,
    complex_: CWComplex | ComplexBatch,
    k: int,
    head: AttentionHeadParams,
) -> Tensor:
    """``LeakyReLU([W_k h_i || B_k^T W_{k-1} h_j B_k] a_k)``, an N_k x N_k score."""
    batch = as_batch(complex_)
    if not 1 <= k <= batch.dimension:
        raise ComplexError(f"attention needs 1 <= k <= {batch.dimension}, got {k}")
    n_k, n_lo = batch.sizes[k], batch.sizes[k - 1]
    if h_i.shape[-2:] != (n_k, n_k) or h_j.shape[-2:] != (n_lo, n_lo):
        raise ValueError(f"state shapes {h_i.shape}, {h_j.shape} do not fit N_{k}={n_k}, N_{k - 1}={n_lo}")
    joint = nx.concat_cols(nx.matmul(head.W[k], h_i), _message(h_j, batch, k, head))
    return nx.activation(nx.matmul(joint, head.a[k]), "leaky_relu")


def csoftmax(scores: Sequence[Tensor]) -> list[Tensor]:
    """Entrywise softmax across a neighbourhood of score matrices.

    The entrywise maximum is subtracted first; it is treated as a constant,
    which leaves values and gradients unchanged.
    """
    if not scores:
        raise ValueError("empty neighbourhood: no incident cells")
    shift = Tensor(np.max(np.stack([s.data for s in scores]), axis=0))
    exps = [nx.activation(nx.sub(s, shift), "exp") for s in scores]
    total = exps[0]
    for e in exps[1:]:
        total = nx.add(total, e)
    return [nx.divide(e, total) for e in exps]


def neighborhood(complex_: CWComplex, k: int, i: int) -> list[int]:
    """Indices of the (k-1)-cells incident to k-cell ``i``."""
    return np.flatnonzero(complex_.boundary(k)[:, i]).tolist()


class IsolatedCellCounter:
    """Counts k-cells whose neighbourhood was empty during attention."""

    def __init__(self):
        self.count = 0


isolated_cells = IsolatedCellCounter()


def attention_update(
    complex_: CWComplex,
    k: int,
    i: int,
    states_lo: Sequence[Tensor],
    head: AttentionHeadParams,
    query: Tensor | None = None,
    act: str = "leaky_relu",
) -> Tensor:
    """New state of k-cell ``i`` from its incident (k-1)-cell states.

    ``sigma(sum_j alpha_ij @ (B_k^T W_{k-1} h_j B_k))``, with ``alpha_ij @ M``
    a matrix product.  An isolated cell gets the zero matrix.
    """
    batch = as_batch(complex_)
    if not 1 <= k <= batch.dimension:
        raise ComplexError(f"attention needs 1 <= k <= {batch.dimension}, got {k}")
    n_k = batch.sizes[k]
    nbrs = neighborhood(complex_, k, i)
    if not nbrs:
        isolated_cells.count += 1
        return Tensor(np.zeros((n_k, n_k)))
    if query is None:
        query = Tensor(_rank_one_states(batch, k)[i])
    messages = [_message(states_lo[j], batch, k, head) for j in nbrs]
    scores = [attention_score(query, states_lo[j], batch, k, head) for j in nbrs]
    alphas = csoftmax(scores)
    total = nx.matmul(alphas[0], messages[0])
    for alpha, msg in zip(alphas[1:], messages[1:]):
        total = nx.add(total, nx.matmul(alpha, msg))
    return nx.activation(total, act)


def multihead_update(
    complex_: CWComplex,
    k: int,
    i: int,
    states_lo: Sequence[Tensor],
    heads: Sequence[AttentionHeadParams],
    projection: Tensor | None,
    query: Tensor | None = None,
) -> Tensor:
    """Concatenate K head outputs (N_k x K N_k) and project back to N_k x N_k."""
    if not heads:
        raise ValueError("need at least one head")
    outs = [attention_update(complex_, k, i, states_lo, h, query) for h in heads]
    joint = outs[0] if len(outs) == 1 else nx.concat_cols(*outs)
    if projection is None:
        return joint
    if projection.shape != (joint.cols, outs[0].cols):
        raise ValueError(f"projection must be {joint.cols} x {outs[0].cols}, got {projection.shape}")
    return nx.matmul(joint, projection)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or ``rng`` is None."""
    if rate <= 0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return nx.hadamard(x, keep)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise each row to zero mean and unit variance, then scale and shift."""
    x, gain, bias = nx.as_tensor(x), nx.as_tensor(gain), nx.as_tensor(bias)
    centred = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    normed = centred * inv_std
    out = normed * gain.data + bias.data

    def vjp(g):
        gn = g * gain.data
        gx = inv_std * (
            gn - gn.mean(axis=-1, keepdims=True) - normed * (gn * normed).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return (
            gx,
            (g * normed).sum(axis=lead).reshape(gain.shape),
            g.sum(axis=lead).reshape(bias.shape),
        )

    return nx.record(out, (x, gain, bias), vjp)


def _block(h: Tensor, params: Params, branch: int, k: int, rate: float, rng) -> Tensor:
    """Dropout, feed-forward with residual, layer norm."""
    pre = f"b{branch}.L{k}."
    h = dropout(h, rate, rng)
    ff = nx.activation(nx.add(nx.matmul(h, params[pre + "ff_w1"]), params[pre + "ff_b1"]), "gelu")
    ff = nx.add(nx.matmul(ff, params[pre + "ff_w2"]), params[pre + "ff_b2"])
    return layer_norm(nx.add(h, ff), params[pre + "ln_gain"], params[pre + "ln_bias"])


def _cell_attention(
    u: Tensor,
    v: Tensor,
    keys: Tensor,
    messages: Tensor,
    cells: tuple[np.ndarray, np.ndarray],
    neighbors: tuple[np.ndarray, np.ndarray],
) -> Tensor:
    """Scores, masked entrywise softmax and LeakyReLU of the weighted message sum, per cell.

    The query half of each score is the outer product of ``u`` (one row per
    complex) with the row of ``v`` at the cell's slot.
    """
    owner, slot = cells
    index, valid = neighbors
    uu = np.ascontiguousarray(u.data.reshape(-1, u.rows))
    vv = np.ascontiguousarray(v.data)
    kk = np.ascontiguousarray(keys.data)
    m = np.ascontiguousarray(messages.data)
    out, alpha = _kernels.cell_attention(uu, vv, owner, slot, kk, m, index, valid)

    def vjp(g):
        g_u, g_v, g_k, g_m = _kernels.cell_attention_vjp(g, out, alpha, uu, vv, owner, slot, kk, m, index, valid)
        return g_u.reshape(u.shape), g_v, g_k, g_m

    return nx.record(out, (u, v, keys, messages), vjp)


def _attention_level(
    batch: ComplexBatch,
    k: int,
    states_lo: Tensor,
    heads: Sequence[AttentionHeadParams],
    projection: Tensor,
) -> Tensor:
    """Multi-head update of every real k-cell of the batch.

    ``states_lo`` stacks one ``N_{k-1} x N_{k-1}`` state per real
    (k-1)-cell; the result stacks one ``N_k x N_k`` state per real k-cell.
    """
    cells = batch.cells(k)
    neighbors = batch.cell_neighbors(k)
    owner_lo, _ = batch.cells(k - 1)
    width = batch.sizes[k]
    bt = batch.stacked_Bt(k)[owner_lo]
    b = batch.stacked_B(k)[owner_lo]
    mask = batch.mask[k]
    top, bottom = (slice(0, width),), (slice(width, 2 * width),)
    if projection.shape != (len(heads) * width, width):
        raise ValueError(f"projection must be {len(heads) * width} x {width}, got {projection.shape}")
    total = None
    for h, head in enumerate(heads):
        # [W_k h_i | m_j] a == W_k h_i a_top + m_j a_bot
        messages = nx.matmul(nx.matmul(nx.matmul(bt, head.W[k - 1]), states_lo), b)
        keys = nx.matmul(messages, nx.index(head.a[k], bottom))
        # the query state of a real cell i is m 1_i^T, so W_k h_i a_top = (W_k m) a_top[i]
        u = nx.matmul(head.W[k], mask[..., :, None])
        v = nx.index(head.a[k], top)
        out = _cell_attention(u, v, keys, messages, cells, neighbors)
        # concat(outs) @ projection, one block of projection rows per head
        part = nx.matmul(out, nx.index(projection, (slice(h * width, (h + 1) * width),)))
        total = part if total is None else nx.add(total, part)
    return total


def _initial_states(batch: ComplexBatch) -> np.ndarray:
    """Stacked rank-one states ``m 1_i^T`` of the real 0-cells."""
    owner, slot = batch.cells(0)
    mask = batch.mask[0] if not batch.single else batch.mask[0][None]
    eye = np.eye(batch.sizes[0])
    return mask[owner][:, :, None] * eye[slot][:, None, :]


def _pool_matrix(batch: ComplexBatch, k: int) -> np.ndarray:
    """``(R, T_k)`` averaging matrix over each complex's real k-cells."""
    owner, _ = batch.cells(k)
    pool = np.zeros((batch.size, owner.size))
    pool[owner, np.arange(owner.size)] = 1.0
    return pool / np.maximum(pool.sum(axis=1, keepdims=True), 1.0)


def cwat_branch(batch: ComplexBatch, params: Params, config: CwAtConfig, branch: int, rng) -> Tensor:
    """One attention network; returns the pooled ``(..., N_n, 1)`` column."""
    n = batch.dimension
    heads = [head_params(params, branch, h, n) for h in range(config.heads)]
    states = Tensor(_initial_states(batch))
    rate = config.dropout if rng is not None else 0.0
    for k in range(1, n + 1):
        states = _attention_level(batch, k, states, heads, params[f"b{branch}.L{k}.proj"])
        states = _block(states, params, branch, k, rate, rng)
    width = batch.sizes[n]
    flat = nx.reshape(states, (states.shape[0], width * width))
    mean_state = nx.matmul(_pool_matrix(batch, n), flat)
    mean_state = nx.reshape(mean_state, batch.lead + (width, width))
    # layer norm centres every row, so pool over the real rows (tokens) per feature
    mask = batch.mask[n]
    weights = mask / np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    return nx.matmul(nx.transpose(mean_state), weights[..., :, None])


def cwat_forward(
    batch: CWComplex | ComplexBatch,
    params: Params,
    config: CwAtConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Two attention branches on the same complex, summed, SELU, linear to a scalar."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    batch = as_batch(batch)
    if batch.dimension < 1:
        raise ComplexError("CW-AT needs a complex of dimension >= 1")
    drop_rng = rng if mode == "train" else None
    pooled = cwat_branch(batch, params, config, 0, drop_rng)
    for br in range(1, BRANCHES):
        pooled = nx.add(pooled, cwat_branch(batch, params, config, br, drop_rng))
    act = nx.activation(pooled, "selu")
    return nx.add(nx.matmul(nx.transpose(act), params["readout_w"]), params["readout_b"])
