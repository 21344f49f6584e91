"""Causal transformer policy that predicts a chunk of future actions.

Tokens (one per frame, oldest first) are linearly embedded and summed with a
learned positional table, pass through ``n_layers`` pre-norm blocks
(masked multi-head self-attention, then a ReLU feed-forward), and the final
token's state is mapped to ``chunk_len * action_dim`` tanh-bounded outputs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContextOverflow, ShapeMismatch
from .params import NetworkParams, glorot_uniform

LN_EPS = 1e-5


@dataclass(frozen=True)
class CausalTransformerSpec:
    input_dim: int
    action_dim: int
    context_len: int = 12
    chunk_len: int = 12
    embed_dim: int = 128
    n_heads: int = 4
    n_layers: int = 1
    ff_dim: int = 256

    def __post_init__(self):
        if min(self.input_dim, self.action_dim, self.context_len, self.chunk_len, self.embed_dim, self.ff_dim) <= 0:
            raise ValueError("transformer dims must be positive")
        if self.n_heads < 1 or self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    def layout(self):
        e, f = self.embed_dim, self.ff_dim
        out = [("W_in", (self.input_dim, e)), ("b_in", (e,)), ("pos", (self.context_len, e))]
        for l in range(self.n_layers):
            out += [
                (f"l{l}.ln1_g", (e,)), (f"l{l}.ln1_b", (e,)),
                (f"l{l}.Wq", (e, e)), (f"l{l}.Wk", (e, e)), (f"l{l}.Wv", (e, e)),
                (f"l{l}.Wo", (e, e)), (f"l{l}.bo", (e,)),
                (f"l{l}.ln2_g", (e,)), (f"l{l}.ln2_b", (e,)),
                (f"l{l}.W1", (e, f)), (f"l{l}.b1", (f,)),
                (f"l{l}.W2", (f, e)), (f"l{l}.b2", (e,)),
            ]
        out += [("W_out", (e, self.chunk_len * self.action_dim)), ("b_out", (self.chunk_len * self.action_dim,))]
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def init_ct(spec: CausalTransformerSpec, seed: int) -> NetworkParams:
    rng = np.random.default_rng(seed)
    params = NetworkParams(spec.layout())
    for name, shape in spec.layout():
        leaf = name.split(".")[-1]
        if leaf.startswith("W"):
            params[name][...] = glorot_uniform(rng, shape[0], shape[1], shape)
        elif leaf.endswith("_g"):
            params[name][...] = 1.0
        elif name == "pos":
            params[name][...] = rng.normal(0.0, 0.02, size=shape)
    return params


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dg = (dy * xhat).reshape(-1, dy.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _lin(x, w):
    # one 2-D GEMM instead of a batch of small ones
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[-1],))


def _outer(a, b):
    # sum over batch and time of per-token outer products
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _split_heads(x, n_heads):
    bsz, t, e = x.shape
    return x.reshape(bsz, t, n_heads, e // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    bsz, h, t, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(bsz, t, h * d)


def _check_tokens(spec, tokens):
    x = np.asarray(tokens, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != spec.input_dim:
        raise ShapeMismatch(f"expected tokens (batch, T, {spec.input_dim}), got {np.shape(tokens)}")
    if not 1 <= x.shape[1] <= spec.context_len:
        raise ContextOverflow(f"sequence length {x.shape[1]} outside [1, {spec.context_len}]")
    return x, squeeze


def _forward(params, spec, x):
    p = params.unflatten(params.theta)
    t = x.shape[1]
    mask = np.tril(np.ones((t, t), dtype=bool))
    scale = 1.0 / np.sqrt(spec.head_dim)
    e = _lin(x, p["W_in"]) + p["b_in"] + p["pos"][:t]
    states = [e]
    caches = []
    for l in range(spec.n_layers):
        pre = f"l{l}."
        a, ln1 = _layer_norm(e, p[pre + "ln1_g"], p[pre + "ln1_b"])
        q = _split_heads(_lin(a, p[pre + "Wq"]), spec.n_heads)
        k = _split_heads(_lin(a, p[pre + "Wk"]), spec.n_heads)
        v = _split_heads(_lin(a, p[pre + "Wv"]), spec.n_heads)
        s = np.where(mask, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
        s = s - s.max(axis=-1, keepdims=True)
        w = np.exp(s)
        w /= w.sum(axis=-1, keepdims=True)
        o = _merge_heads(w @ v)
        e = e + _lin(o, p[pre + "Wo"]) + p[pre + "bo"]
        c, ln2 = _layer_norm(e, p[pre + "ln2_g"], p[pre + "ln2_b"])
        u = _lin(c, p[pre + "W1"]) + p[pre + "b1"]
        r = np.maximum(u, 0.0)
        e = e + _lin(r, p[pre + "W2"]) + p[pre + "b2"]
        states.append(e)
        caches.append(dict(a=a, ln1=ln1, q=q, k=k, v=v, w=w, o=o, c=c, ln2=ln2, u=u, r=r))
    last = e[:, -1, :]
    y = np.tanh(last @ p["W_out"] + p["b_out"])
    return y, states, caches, p


def ct_forward(params: NetworkParams, spec: CausalTransformerSpec, tokens) -> np.ndarray:
    """Action chunk(s): ``[chunk_len, action_dim]`` per sequence (batched if tokens are 3-D)."""
    x, squeeze = _check_tokens(spec, tokens)
    y, _, _, _ = _forward(params, spec, x)
    y = y.reshape(x.shape[0], spec.chunk_len, spec.action_dim)
    return y[0] if squeeze else y


def ct_hidden_states(params: NetworkParams, spec: CausalTransformerSpec, tokens) -> list[np.ndarray]:
    """Residual-stream states after the embedding and after every block."""
    x, _ = _check_tokens(spec, tokens)
    return _forward(params, spec, x)[1]


def ct_backward(params: NetworkParams, spec: CausalTransformerSpec, tokens, targets) -> tuple[float, np.ndarray]:
    """MSE loss summed over the chunk, averaged over the batch, and its gradient."""
    x, _ = _check_tokens(spec, tokens)
    bsz, t, _ = x.shape
    targets = np.asarray(targets, dtype=np.float64).reshape(bsz, -1)
    if targets.shape[1] != spec.chunk_len * spec.action_dim:
        raise ShapeMismatch(f"targets must hold {spec.chunk_len}x{spec.action_dim} values per sequence")
    y, states, caches, p = _forward(params, spec, x)
    diff = y - targets
    loss = float(np.sum(diff * diff) / bsz)

    flat, g = params.zeros_like()
    dz = (2.0 / bsz) * diff * (1.0 - y * y)
    last = states[-1][:, -1, :]
    g["W_out"][...] = last.T @ dz
    g["b_out"][...] = dz.sum(axis=0)
    de = np.zeros_like(states[-1])
    de[:, -1, :] = dz @ p["W_out"].T

    scale = 1.0 / np.sqrt(spec.head_dim)
    for l in range(spec.n_layers - 1, -1, -1):
        pre = f"l{l}."
        cc = caches[l]
        # feed-forward sublayer
        g[pre + "b2"][...] = de.sum(axis=(0, 1))
        g[pre + "W2"][...] = _outer(cc["r"], de)
        du = (_lin(de, p[pre + "W2"].T)) * (cc["u"] > 0.0)
        g[pre + "b1"][...] = du.sum(axis=(0, 1))
        g[pre + "W1"][...] = _outer(cc["c"], du)
        dc = _lin(du, p[pre + "W1"].T)
        dmid, g[pre + "ln2_g"][...], g[pre + "ln2_b"][...] = _layer_norm_backward(dc, p[pre + "ln2_g"], cc["ln2"])
        de = de + dmid
        # attention sublayer
        g[pre + "bo"][...] = de.sum(axis=(0, 1))
        g[pre + "Wo"][...] = _outer(cc["o"], de)
        do = _split_heads(_lin(de, p[pre + "Wo"].T), spec.n_heads)
        w = cc["w"]
        dw = do @ cc["v"].transpose(0, 1, 3, 2)
        dv = w.transpose(0, 1, 3, 2) @ do
        ds = w * (dw - (dw * w).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ cc["k"]
        dk = ds.transpose(0, 1, 3, 2) @ cc["q"]
        dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        a = cc["a"]
        g[pre + "Wq"][...] = _outer(a, dq)
        g[pre + "Wk"][...] = _outer(a, dk)
        g[pre + "Wv"][...] = _outer(a, dv)
        da = _lin(dq, p[pre + "Wq"].T) + _lin(dk, p[pre + "Wk"].T) + _lin(dv, p[pre + "Wv"].T)
        dpre, g[pre + "ln1_g"][...], g[pre + "ln1_b"][...] = _layer_norm_backward(da, p[pre + "ln1_g"], cc["ln1"])
        de = de + dpre

    g["pos"][:t] = de.sum(axis=0)
    g["b_in"][...] = de.sum(axis=(0, 1))
    g["W_in"][...] = _outer(x, de)
    return loss, flat
