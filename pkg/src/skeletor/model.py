"""The refinement network: skeletal embedding, sinusoidal positional
encoding, a stack of identical encoder layers (multi-head self-attention +
position-wise feed-forward, post-norm residuals), and a linear output head
mapping back to per-frame joint coordinates.

Input frames are flattened normalized skeletons; when `use_confidence` is on
the per-joint confidences are appended to the coordinate vector so the
network can tell a masked joint (all zeros, confidence 0) from a joint that
legitimately sits near the origin.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericalError, ShapeError
from .optim import xavier_init


@dataclass(frozen=True)
class ModelConfig:
    n_joints: int = 50
    d_model: int = 128
    n_layers: int = 8
    n_heads: int = 4
    d_k: int = 0  # 0 means d_model // n_heads
    d_v: int = 0
    d_ff: int = 512
    window_size: int = 32
    use_confidence: bool = True
    use_positional_encoding: bool = True

    def __post_init__(self):
        if self.d_model <= 0 or self.d_model % 2 != 0:
            raise ConfigError(f"d_model must be positive and even, got {self.d_model}")
        if self.n_heads < 1 or self.n_layers < 1 or self.n_joints < 1:
            raise ConfigError("n_heads, n_layers and n_joints must be >= 1")
        if self.d_k == 0:
            object.__setattr__(self, "d_k", self.d_model // self.n_heads)
        if self.d_v == 0:
            object.__setattr__(self, "d_v", self.d_model // self.n_heads)
        if self.d_k < 1 or self.d_v < 1 or self.d_ff < 1 or self.window_size < 1:
            raise ConfigError("d_k, d_v, d_ff and window_size must be >= 1")

    @property
    def input_dim(self) -> int:
        return 3 * self.n_joints + (self.n_joints if self.use_confidence else 0)

    @property
    def output_dim(self) -> int:
        return 3 * self.n_joints

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from exc


def positional_encoding(pos: int, d_model: int) -> np.ndarray:
    """Sinusoidal position vector: sin at even slots, cos at odd slots."""
    if d_model % 2 != 0:
        raise ConfigError(f"d_model must be even for positional encoding, got {d_model}")
    if pos < 0:
        raise ConfigError(f"position must be >= 0, got {pos}")
    i = np.arange(d_model // 2)
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty(d_model)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def positional_encoding_table(length: int, d_model: int) -> np.ndarray:
    return np.stack([positional_encoding(p, d_model) for p in range(length)])


def init_parameters(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh parameter set: Xavier-uniform matrices, zero biases, unit gains."""
    d, dk, dv, dff = config.d_model, config.d_k, config.d_v, config.d_ff
    params: dict[str, Tensor] = {}

    def weight(name, shape):
        params[name] = Tensor(xavier_init(shape, rng), requires_grad=True)

    def vector(name, size, value=0.0):
        params[name] = Tensor(np.full(size, value), requires_grad=True)

    weight("embed.weight", (config.input_dim, d))
    vector("embed.bias", d)
    vector("embed.ln.gain", d, 1.0)
    vector("embed.ln.bias", d)
    for i in range(config.n_layers):
        for h in range(config.n_heads):
            weight(f"enc{i}.attn.q{h}", (d, dk))
            weight(f"enc{i}.attn.k{h}", (d, dk))
            weight(f"enc{i}.attn.v{h}", (d, dv))
        weight(f"enc{i}.attn.out", (config.n_heads * dv, d))
        vector(f"enc{i}.ln1.gain", d, 1.0)
        vector(f"enc{i}.ln1.bias", d)
        weight(f"enc{i}.ffn.w1", (d, dff))
        vector(f"enc{i}.ffn.b1", dff)
        weight(f"enc{i}.ffn.w2", (dff, d))
        vector(f"enc{i}.ffn.b2", d)
        vector(f"enc{i}.ln2.gain", d, 1.0)
        vector(f"enc{i}.ln2.bias", d)
    weight("head.weight", (d, config.output_dim))
    vector("head.bias", config.output_dim)
    return params


def embed(frames: Tensor, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    """Per-frame embedding: LayerNorm(ReLU(x W_e + b_e))."""
    if frames.shape[-1] != config.input_dim:
        raise ShapeError(f"expected input width {config.input_dim}, got {frames.shape[-1]}")
    pre = ad.relu(ad.add(ad.matmul(frames, params["embed.weight"]), params["embed.bias"]))
    return ad.layer_norm(pre, params["embed.ln.gain"], params["embed.ln.bias"])


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention, bidirectional (no mask)."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query/key widths disagree: {q.shape} vs {k.shape}")
    scores = ad.scale(ad.matmul(q, ad.transpose_last2(k)), 1.0 / np.sqrt(q.shape[-1]))
    return ad.matmul(ad.softmax(scores, axis=-1), v)


def multi_head(q: Tensor, k: Tensor, v: Tensor, params: dict[str, Tensor], layer: int, config: ModelConfig) -> Tensor:
    heads = []
    for h in range(config.n_heads):
        heads.append(
            attention(
                ad.matmul(q, params[f"enc{layer}.attn.q{h}"]),
                ad.matmul(k, params[f"enc{layer}.attn.k{h}"]),
                ad.matmul(v, params[f"enc{layer}.attn.v{h}"]),
            )
        )
    out = params[f"enc{layer}.attn.out"]
    if config.n_heads * config.d_v != out.shape[0]:
        raise ShapeError(f"concat width {config.n_heads * config.d_v} does not match output projection {out.shape}")
    return ad.matmul(ad.concat_last(heads), out)


def feed_forward(x: Tensor, params: dict[str, Tensor], layer: int) -> Tensor:
    inner = ad.relu(ad.add(ad.matmul(x, params[f"enc{layer}.ffn.w1"]), params[f"enc{layer}.ffn.b1"]))
    return ad.add(ad.matmul(inner, params[f"enc{layer}.ffn.w2"]), params[f"enc{layer}.ffn.b2"])


def encoder_layer(x: Tensor, params: dict[str, Tensor], layer: int, config: ModelConfig) -> Tensor:
    """Post-norm residual block: LN(x + MHA(x)) then LN(· + FFN(·))."""
    attended = ad.layer_norm(
        ad.add(x, multi_head(x, x, x, params, layer, config)),
        params[f"enc{layer}.ln1.gain"],
        params[f"enc{layer}.ln1.bias"],
    )
    return ad.layer_norm(
        ad.add(attended, feed_forward(attended, params, layer)),
        params[f"enc{layer}.ln2.gain"],
        params[f"enc{layer}.ln2.bias"],
    )


def forward(x, params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    """Full network: embed, add positions, n encoder layers, linear head.

    Accepts (T, input_dim) or batched (B, T, input_dim); returns the matching
    shape with output width 3N.
    """
    t = x if isinstance(x, Tensor) else Tensor(x)
    h = embed(t, params, config)
    if config.use_positional_encoding:
        h = ad.add(h, Tensor(positional_encoding_table(t.shape[-2], config.d_model)))
    for i in range(config.n_layers):
        h = encoder_layer(h, params, i, config)
        if not np.isfinite(h.data).all():
            raise NumericalError(f"non-finite activation after encoder layer {i}")
    return ad.add(ad.matmul(h, params["head.weight"]), params["head.bias"])


def assemble_input(coords: np.ndarray, confidence: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Build the network input: flattened coordinates, confidences appended."""
    if not config.use_confidence:
        return coords
    return np.concatenate([coords, confidence], axis=-1)


class SkeletorModel:
    """Config + parameters bundle with a numpy-in / numpy-out predict path."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "SkeletorModel":
        return cls(config, init_parameters(config, rng))

    def forward(self, x) -> Tensor:
        return forward(x, self.params, self.config)

    def predict(self, coords: np.ndarray, confidence: np.ndarray) -> np.ndarray:
        """Refined coordinates for (T, 3N) or (B, T, 3N) windows."""
        return self.forward(assemble_input(coords, confidence, self.config)).data
