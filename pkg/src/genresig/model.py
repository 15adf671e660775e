"""Per-token CNN encoder, multi-head attention pooling and genre classifier.

Every token is encoded by the same convolutional stack (weight sharing keeps
the sequence structure), attention mixes the token embeddings, the attended
rows are mean-pooled, and a dense layer produces the genre logits. There is
no positional encoding, so logits are invariant under token permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .optim import Parameter
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    token_count: int = 10
    token_bins: int = 217
    token_frames: int = 45
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    embed_dim: int = 128
    heads: int = 4
    class_count: int = 10
    score_temperature: float = 10.0

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must divide evenly into heads")
        h, w = self.token_bins, self.token_frames
        for _ in self.conv_channels:
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ValueError("token too small for the pooling chain")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def flat_dim(self) -> int:
        h, w = self.token_bins, self.token_frames
        for _ in self.conv_channels:
            h, w = h // 2, w // 2
        return self.conv_channels[-1] * h * w

    def to_dict(self) -> dict:
        return {
            "token_count": self.token_count,
            "token_bins": self.token_bins,
            "token_frames": self.token_frames,
            "conv_channels": list(self.conv_channels),
            "embed_dim": self.embed_dim,
            "heads": self.heads,
            "class_count": self.class_count,
            "score_temperature": self.score_temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


def param_spec(cfg: ModelConfig):
    """Ordered (name, shape, fan_in) table; fan_in None means zero init."""
    spec = []
    c_prev = 1
    for i, c_out in enumerate(cfg.conv_channels):
        spec.append((f"conv{i}.kernel", (c_out, c_prev, 3, 3), c_prev * 9))
        spec.append((f"conv{i}.bias", (c_out,), None))
        c_prev = c_out
    spec.append(("token_proj.weight", (cfg.embed_dim, cfg.flat_dim), cfg.flat_dim))
    spec.append(("token_proj.bias", (cfg.embed_dim,), None))
    for name in ("wq", "wk", "wv", "wo"):
        spec.append((f"attn.{name}", (cfg.embed_dim, cfg.embed_dim), cfg.embed_dim))
    # zero-started classifier: logits are exactly 0 at init, so the first
    # loss on balanced classes is ln(class_count) and training curves have
    # a fixed anchor
    spec.append(("classifier.weight", (cfg.class_count, cfg.embed_dim), None))
    spec.append(("classifier.bias", (cfg.class_count,), None))
    return spec


class ModelParams:
    """All learnable weights, addressable by name in a fixed order."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Parameter]):
        self.cfg = cfg
        expected = [name for name, _, _ in param_spec(cfg)]
        if set(params) != set(expected):
            raise ShapeMismatch("parameter set does not match the model config")
        self._params = {name: params[name] for name in expected}

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grads(self):
        for p in self._params.values():
            p.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams(self.cfg, {k: p.copy() for k, p in self._params.items()})

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: dict[str, np.ndarray]) -> "ModelParams":
        params = {}
        for name, shape, _ in param_spec(cfg):
            if name not in arrays:
                raise ShapeMismatch(f"missing parameter block {name}")
            if arrays[name].shape != shape:
                raise ShapeMismatch(
                    f"{name}: stored shape {arrays[name].shape}, config wants {shape}"
                )
            params[name] = Parameter(name, np.asarray(arrays[name], dtype=np.float64))
        extra = set(arrays) - set(params)
        if extra:
            raise ShapeMismatch(f"unknown parameter blocks {sorted(extra)}")
        return cls(cfg, params)


def init_params(cfg: ModelConfig, seed) -> ModelParams:
    """Kaiming-uniform fan-in initialization for weights, zeros for biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in param_spec(cfg):
        if fan_in is None:
            values = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / fan_in)
            values = rng.uniform(-bound, bound, size=shape)
        params[name] = Parameter(name, values)
    return ModelParams(cfg, params)


@dataclass
class ForwardOutput:
    """Graph nodes for the loss path plus report-ready attention arrays."""

    logits: Tensor
    token_embeddings: Tensor  # [T, d], pre-attention CNN outputs
    attended: Tensor          # [T, d]
    attention: np.ndarray     # [heads, T, T], query x key
    token_scores: np.ndarray  # [T]


def _encode_batch(tokens: Tensor, params: ModelParams) -> Tensor:
    """Shared CNN over a [N, 1, bins, frames] batch -> [N, embed_dim]."""
    x = tokens
    for i in range(len(params.cfg.conv_channels)):
        x = T.conv2d(x, params[f"conv{i}.kernel"].tensor, params[f"conv{i}.bias"].tensor)
        x = T.relu(x)
        x = T.maxpool2d(x)
    x = T.reshape(x, (tokens.shape[0], params.cfg.flat_dim))
    x = T.affine(x, params["token_proj.weight"].tensor, params["token_proj.bias"].tensor)
    return T.relu(x)


def encode_token(token, params: ModelParams) -> Tensor:
    """Embed a single [1, bins, frames] token with the shared encoder."""
    token = token if isinstance(token, Tensor) else Tensor(token)
    cfg = params.cfg
    if token.shape != (1, cfg.token_bins, cfg.token_frames):
        raise ShapeMismatch(
            f"token shape {token.shape}, expected (1, {cfg.token_bins}, {cfg.token_frames})"
        )
    out = _encode_batch(T.reshape(token, (1, 1, cfg.token_bins, cfg.token_frames)), params)
    return T.reshape(out, (cfg.embed_dim,))


def multi_head_attention(embeddings: Tensor, params: ModelParams):
    """Scaled dot-product attention over the token sequence.

    Returns (attended [T, d], head matrices list of [T, T] tensors). No
    residual connection and no normalization layer around the block.
    """
    cfg = params.cfg
    if embeddings.ndim != 2 or embeddings.shape[1] != cfg.embed_dim:
        raise ShapeMismatch(f"embeddings {embeddings.shape}, expected [T, {cfg.embed_dim}]")
    q = T.affine(embeddings, params["attn.wq"].tensor)
    k = T.affine(embeddings, params["attn.wk"].tensor)
    v = T.affine(embeddings, params["attn.wv"].tensor)

    dk = cfg.head_dim
    contexts, heads = [], []
    for h in range(cfg.heads):
        lo, hi = h * dk, (h + 1) * dk
        qh, kh, vh = (T.slice_cols(m, lo, hi) for m in (q, k, v))
        scores = T.scale(T.matmul(qh, T.transpose(kh)), 1.0 / math.sqrt(dk))
        attn = T.softmax(scores)
        heads.append(attn)
        contexts.append(T.matmul(attn, vh))
    attended = T.affine(T.concat_cols(contexts), params["attn.wo"].tensor)
    return attended, heads


def token_scores(attention: np.ndarray) -> np.ndarray:
    """Mean attention mass each token receives as a key, over heads and
    queries. Sums to 1 because every attention row does."""
    attention = np.asarray(attention)
    if attention.ndim != 3 or attention.shape[1] != attention.shape[2]:
        raise ShapeMismatch(f"attention must be [heads, T, T], got {attention.shape}")
    return attention.mean(axis=(0, 1))


def forward(tokens, params: ModelParams) -> ForwardOutput:
    """Full pass: encode tokens, attend, mean-pool, classify."""
    cfg = params.cfg
    data = tokens.tokens if hasattr(tokens, "tokens") else np.asarray(tokens, dtype=np.float64)
    if data.shape != (cfg.token_count, cfg.token_bins, cfg.token_frames):
        raise ShapeMismatch(
            f"tokens {data.shape}, expected "
            f"({cfg.token_count}, {cfg.token_bins}, {cfg.token_frames})"
        )
    batch = Tensor(data[:, None, :, :])
    embeddings = _encode_batch(batch, params)
    attended, heads = multi_head_attention(embeddings, params)
    pooled = T.mean_rows(attended)
    logits = T.affine(pooled, params["classifier.weight"].tensor,
                      params["classifier.bias"].tensor)
    attention = np.stack([h.data for h in heads])
    return ForwardOutput(
        logits=logits,
        token_embeddings=embeddings,
        attended=attended,
        attention=attention,
        token_scores=token_scores(attention),
    )
