"""Attention encoder-decoder: teacher-forced scoring and backpropagation.

Row-vector convention throughout: activations are (batch, dim) and weights
(in_dim, out_dim).  GRU blocks stack the update, reset and candidate gates
column-wise as [z | r | n].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prnmt.model.params import ModelParams


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def masked_softmax(scores, mask):
    scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


# --- GRU cell ---------------------------------------------------------------

def gru_forward(x, h, W, U, b, mask=None):
    H = h.shape[1]
    gx = x @ W + b
    gh = h @ U[:, : 2 * H]
    z = sigmoid(gx[:, :H] + gh[:, :H])
    r = sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
    rh = r * h
    n = np.tanh(gx[:, 2 * H:] + rh @ U[:, 2 * H:])
    h_new = (1.0 - z) * h + z * n
    if mask is not None:
        h_new = np.where(mask[:, None], h_new, h)
    return h_new, (x, h, z, r, n, rh, mask)


def gru_backward(dh_out, cache, W, U, dW, dU, db):
    """Accumulate weight gradients in place; return (dx, dh_prev)."""
    x, h, z, r, n, rh, mask = cache
    H = h.shape[1]
    if mask is None:
        dhn = dh_out
        dh = np.zeros_like(dh_out)
    else:
        m = mask[:, None]
        dhn = np.where(m, dh_out, 0.0)
        dh = np.where(m, 0.0, dh_out)
    dz = dhn * (n - h)
    dh = dh + dhn * (1.0 - z)
    dan = dhn * z * (1.0 - n * n)
    drh = dan @ U[:, 2 * H:].T
    dU[:, 2 * H:] += rh.T @ dan
    dh += drh * r
    dr = drh * h
    dzr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
    dU[:, : 2 * H] += h.T @ dzr
    dh += dzr @ U[:, : 2 * H].T
    dg = np.concatenate([dzr, dan], axis=1)
    dW += x.T @ dg
    db += dg.sum(axis=0)
    return dg @ W.T, dh


# --- batching ----------------------------------------------------------------

@dataclass
class Batch:
    src: np.ndarray        # (B, I) int
    src_mask: np.ndarray   # (B, I) bool
    tgt_in: np.ndarray     # (B, J) int, BOS-shifted
    tgt_out: np.ndarray    # (B, J) int
    tgt_mask: np.ndarray   # (B, J) bool


def make_batch(sources, targets, bos_id: int) -> Batch:
    """Pad sequences; targets are scored exactly as given (no EOS added here)."""
    B = len(sources)
    if B == 0 or B != len(targets):
        raise ValueError("need equally many, and at least one, sources and targets")
    if any(len(s) == 0 for s in sources) or any(len(t) == 0 for t in targets):
        raise ValueError("empty sequence in batch")
    I = max(len(s) for s in sources)
    J = max(len(t) for t in targets)
    src = np.zeros((B, I), dtype=np.int64)
    src_mask = np.zeros((B, I), dtype=bool)
    tgt_in = np.zeros((B, J), dtype=np.int64)
    tgt_out = np.zeros((B, J), dtype=np.int64)
    tgt_mask = np.zeros((B, J), dtype=bool)
    for b, (s, t) in enumerate(zip(sources, targets)):
        src[b, : len(s)] = s
        src_mask[b, : len(s)] = True
        tgt_out[b, : len(t)] = t
        tgt_in[b, 0] = bos_id
        tgt_in[b, 1: len(t)] = t[:-1]
        tgt_mask[b, : len(t)] = True
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask)


# --- encoder -------------------------------------------------------------------

@dataclass
class EncoderState:
    annotations: np.ndarray   # (B, I, 2H)
    proj: np.ndarray          # (B, I, A) annotations @ att_U
    mask: np.ndarray          # (B, I)
    init_state: np.ndarray    # (B, H)
    cache: dict | None = None

    def select(self, rows) -> "EncoderState":
        return EncoderState(self.annotations[rows], self.proj[rows], self.mask[rows],
                            self.init_state[rows])


def encode(params: ModelParams, src, src_mask, keep_cache: bool = False) -> EncoderState:
    p = params.arrays
    B, I = src.shape
    H = params.config.hidden_dim
    emb = p["src_emb"][src]
    hf = np.zeros((B, I, H))
    hb = np.zeros((B, I, H))
    caches_f, caches_b = [None] * I, [None] * I
    h = np.zeros((B, H))
    for t in range(I):
        h, caches_f[t] = gru_forward(emb[:, t], h, p["encf_W"], p["encf_U"], p["encf_b"], src_mask[:, t])
        hf[:, t] = h
    h = np.zeros((B, H))
    for t in reversed(range(I)):
        h, caches_b[t] = gru_forward(emb[:, t], h, p["encb_W"], p["encb_U"], p["encb_b"], src_mask[:, t])
        hb[:, t] = h
    ann = np.concatenate([hf, hb], axis=2)
    lengths = src_mask.sum(axis=1, keepdims=True)
    mean = (ann * src_mask[:, :, None]).sum(axis=1) / lengths
    s0 = np.tanh(mean @ p["init_W"] + p["init_b"])
    proj = ann @ p["att_U"]
    cache = None
    if keep_cache:
        cache = dict(src=src, caches_f=caches_f, caches_b=caches_b, mean=mean, lengths=lengths)
    return EncoderState(ann, proj, src_mask, s0, cache)


# --- decoder -------------------------------------------------------------------

def attend(params: ModelParams, enc: EncoderState, s_prev):
    p = params.arrays
    pre = (s_prev @ p["att_W"])[:, None, :] + enc.proj + p["att_b"]
    T = np.tanh(pre)
    alpha = masked_softmax(T @ p["att_v"], enc.mask)
    ctx = np.einsum("bi,bic->bc", alpha, enc.annotations)
    return alpha, ctx, T


def decoder_step(params: ModelParams, enc: EncoderState, prev_tokens, s_prev):
    """One decoding step for every row.

    Returns (log-probs over the target vocabulary, attention over source,
    new decoder state, cache for backprop).
    """
    p = params.arrays
    e = p["tgt_emb"][prev_tokens]
    alpha, ctx, T = attend(params, enc, s_prev)
    xin = np.concatenate([e, ctx], axis=1)
    s, gcache = gru_forward(xin, s_prev, p["dec_W"], p["dec_U"], p["dec_b"])
    t = np.tanh(s @ p["ro_Ws"] + e @ p["ro_We"] + ctx @ p["ro_Wc"] + p["ro_b"])
    logp = log_softmax(t @ p["out_W"] + p["out_b"])
    cache = (prev_tokens, e, alpha, ctx, T, s_prev, gcache, s, t)
    return logp, alpha, s, cache


@dataclass
class ForwardResult:
    logprobs: np.ndarray       # (B,) sequence log-probabilities
    token_logprobs: np.ndarray  # (B, J), zero at padding
    attention: list            # per sequence (J_b, I_b) arrays
    enc: EncoderState
    steps: list                # per-step caches


def forward(params: ModelParams, batch: Batch, keep_cache: bool = False) -> ForwardResult:
    enc = encode(params, batch.src, batch.src_mask, keep_cache=keep_cache)
    B, J = batch.tgt_out.shape
    s = enc.init_state
    tok_lp = np.zeros((B, J))
    att = np.zeros((B, J, batch.src.shape[1]))
    steps = []
    rows = np.arange(B)
    for j in range(J):
        logp, alpha, s, cache = decoder_step(params, enc, batch.tgt_in[:, j], s)
        tok_lp[:, j] = np.where(batch.tgt_mask[:, j], logp[rows, batch.tgt_out[:, j]], 0.0)
        att[:, j] = alpha
        if keep_cache:
            steps.append((cache, np.exp(logp)))
    seq_lp = tok_lp.sum(axis=1)
    J_b = batch.tgt_mask.sum(axis=1)
    I_b = batch.src_mask.sum(axis=1)
    attention = [att[b, : J_b[b], : I_b[b]].copy() for b in range(B)]
    return ForwardResult(seq_lp, tok_lp, attention, enc, steps)


def backward(params: ModelParams, batch: Batch, fwd: ForwardResult, weights) -> ModelParams:
    """Gradient of sum_b weights[b] * log P(y_b | x_b) w.r.t. every parameter block."""
    p = params.arrays
    g = params.zeros_like()
    d = g.arrays
    E = params.config.embed_dim
    enc = fwd.enc
    weights = np.asarray(weights, dtype=np.float64)
    B, J = batch.tgt_out.shape
    rows = np.arange(B)

    d_ann = np.zeros_like(enc.annotations)
    d_proj = np.zeros_like(enc.proj)
    ds_next = np.zeros_like(enc.init_state)
    for j in reversed(range(J)):
        cache, probs = fwd.steps[j]
        prev_tokens, e, alpha, ctx, T, s_prev, gcache, s, t = cache
        w = np.where(batch.tgt_mask[:, j], weights, 0.0)
        dlogits = -probs * w[:, None]
        dlogits[rows, batch.tgt_out[:, j]] += w

        d["out_W"] += t.T @ dlogits
        d["out_b"] += dlogits.sum(axis=0)
        dpt = (dlogits @ p["out_W"].T) * (1.0 - t * t)
        d["ro_Ws"] += s.T @ dpt
        d["ro_We"] += e.T @ dpt
        d["ro_Wc"] += ctx.T @ dpt
        d["ro_b"] += dpt.sum(axis=0)
        ds = ds_next + dpt @ p["ro_Ws"].T
        de = dpt @ p["ro_We"].T
        dctx = dpt @ p["ro_Wc"].T

        dxin, ds_prev = gru_backward(ds, gcache, p["dec_W"], p["dec_U"], d["dec_W"], d["dec_U"], d["dec_b"])
        de += dxin[:, :E]
        dctx += dxin[:, E:]

        # context = sum_i alpha_i * annotation_i
        dalpha = np.einsum("bic,bc->bi", enc.annotations, dctx)
        d_ann += alpha[:, :, None] * dctx[:, None, :]
        dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        d["att_v"] += np.einsum("bia,bi->a", T, dscore)
        dpre = dscore[:, :, None] * p["att_v"] * (1.0 - T * T)
        dpre_sum = dpre.sum(axis=1)
        d["att_W"] += s_prev.T @ dpre_sum
        d["att_b"] += dpre_sum.sum(axis=0)
        ds_prev += dpre_sum @ p["att_W"].T
        d_proj += dpre

        np.add.at(d["tgt_emb"], prev_tokens, de)
        ds_next = ds_prev

    ec = enc.cache
    # initial decoder state from the mean annotation
    dpre0 = ds_next * (1.0 - enc.init_state ** 2)
    d["init_W"] += ec["mean"].T @ dpre0
    d["init_b"] += dpre0.sum(axis=0)
    dmean = dpre0 @ p["init_W"].T
    d_ann += (dmean / ec["lengths"])[:, None, :] * enc.mask[:, :, None]

    d["att_U"] += np.einsum("bic,bia->ca", enc.annotations, d_proj)
    d_ann += d_proj @ p["att_U"].T

    H = params.config.hidden_dim
    I = batch.src.shape[1]
    demb = np.zeros((B, I, E))
    dh = np.zeros((B, H))
    for t_ in reversed(range(I)):
        dh = dh + d_ann[:, t_, :H]
        dx, dh = gru_backward(dh, ec["caches_f"][t_], p["encf_W"], p["encf_U"],
                              d["encf_W"], d["encf_U"], d["encf_b"])
        demb[:, t_] += dx
    dh = np.zeros((B, H))
    for t_ in range(I):
        dh = dh + d_ann[:, t_, H:]
        dx, dh = gru_backward(dh, ec["caches_b"][t_], p["encb_W"], p["encb_U"],
                              d["encb_W"], d["encb_U"], d["encb_b"])
        demb[:, t_] += dx
    np.add.at(d["src_emb"], ec["src"], demb)
    return g


def score(params: ModelParams, sources, targets):
    """Sequence log-probabilities and attention matrices for a batch of pairs."""
    batch = make_batch(sources, targets, params.config.bos_id)
    fwd = forward(params, batch)
    return fwd.logprobs, fwd.attention


def weighted_grad(params: ModelParams, sources, targets, weights):
    """(log-probs, gradient of sum_b weights[b] * log P(y_b|x_b))."""
    batch = make_batch(sources, targets, params.config.bos_id)
    fwd = forward(params, batch, keep_cache=True)
    return fwd.logprobs, backward(params, batch, fwd, weights)


def _with_eos(y, eos_id, append_eos):
    y = list(y)
    if append_eos and (not y or y[-1] != eos_id):
        y.append(eos_id)
    return y


def forward_logprob(params: ModelParams, x, y, append_eos: bool = True):
    """Forced decoding of one pair: (log P(y|x), attention matrix target x source).

    With ``append_eos`` the EOS step is scored unless ``y`` already ends in EOS.
    """
    y = _with_eos(y, params.config.eos_id, append_eos)
    lps, att = score(params, [list(x)], [y])
    return float(lps[0]), att[0]


def grad_logprob(params: ModelParams, x, y, append_eos: bool = True):
    """(log P(y|x), d log P(y|x) / d params) by full backpropagation."""
    y = _with_eos(y, params.config.eos_id, append_eos)
    lps, grad = weighted_grad(params, [list(x)], [y], [1.0])
    return float(lps[0]), grad
