"""Two-headed DragoNet forward pass.

Token ids for both descriptors go through a column embedding plus
sinusoidal positions, a stack of post-norm Transformer encoder layers and
masked mean pooling. The two pooled vectors are concatenated and passed
into one shared ReLU layer feeding a macro head and a micro head.

All functions here are written with :mod:`dragonet.numerics.autodiff`
ops, so they run on plain arrays for inference and on tape variables for
training.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from dragonet.errors import ConfigError, ShapeError
from dragonet.numerics import autodiff as ad
from dragonet.taxonomy import Taxonomy, resolve, taxonomy_attention
from dragonet.text import PAD, EncodedSentence, Vocabulary, encode_many

SCENARIOS = ("both", "name_only", "activity_only")
_LAYER_KEYS = ("wq", "wk", "wv", "wo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    macro_count: int
    micro_count: int
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    ffn_hidden: int = 128
    fusion_hidden: int = 128
    max_len: int = 16
    shared_encoder: bool = True
    head_activation: str = "sigmoid"
    norm_eps: float = 1e-5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and (not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1):
                raise ConfigError(f"ModelConfig.{f.name} must be a positive integer, got {v!r}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.embed_dim % 2:
            raise ConfigError(f"embed_dim must be even for sinusoidal positions, got {self.embed_dim}")
        if self.head_activation not in ("sigmoid", "softmax"):
            raise ConfigError(f"head_activation must be 'sigmoid' or 'softmax', got {self.head_activation!r}")
        if not isinstance(self.shared_encoder, bool):
            raise ConfigError("shared_encoder must be a boolean")
        if not self.norm_eps > 0:
            raise ConfigError("norm_eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def encoder_prefixes(self) -> tuple[str, str]:
        return ("encoder", "encoder") if self.shared_encoder else ("encoder_name", "encoder_activity")


@dataclass(frozen=True)
class PredictionPair:
    o_alpha: np.ndarray
    o_beta: np.ndarray
    o_beta_corrected: np.ndarray | None = None


def positional_encoding(max_len: int, d: int) -> np.ndarray:
    if d % 2:
        raise ConfigError(f"positional_encoding: dimension must be even, got {d}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    rate = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((max_len, d))
    pe[:, 0::2] = np.sin(pos / rate)
    pe[:, 1::2] = np.cos(pos / rate)
    return pe


# -- parameters ---------------------------------------------------------


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded uniform(+-sqrt(1/fan_in)) weights; norms start at gamma=1, beta=0.

    The embedding table is a lookup (a one-hot input with a single active
    unit) so its fan-in is 1.
    """
    rng = np.random.default_rng(seed)
    d, f = config.embed_dim, config.ffn_hidden
    p: dict[str, np.ndarray] = {"embedding": _uniform(rng, (config.vocab_size, d), 1)}
    for prefix in dict.fromkeys(config.encoder_prefixes()):
        for i in range(config.num_layers):
            key = f"{prefix}.{i}."
            for w in ("wq", "wk", "wv", "wo"):
                p[key + w] = _uniform(rng, (d, d), d)
            p[key + "ln1_g"] = np.ones(d)
            p[key + "ln1_b"] = np.zeros(d)
            p[key + "w1"] = _uniform(rng, (d, f), d)
            p[key + "b1"] = _uniform(rng, (f,), d)
            p[key + "w2"] = _uniform(rng, (f, d), f)
            p[key + "b2"] = _uniform(rng, (d,), f)
            p[key + "ln2_g"] = np.ones(d)
            p[key + "ln2_b"] = np.zeros(d)
    h = config.fusion_hidden
    p["fusion.w"] = _uniform(rng, (2 * d, h), 2 * d)
    p["fusion.b"] = _uniform(rng, (h,), 2 * d)
    p["head_alpha.w"] = _uniform(rng, (h, config.macro_count), h)
    p["head_alpha.b"] = _uniform(rng, (config.macro_count,), h)
    p["head_beta.w"] = _uniform(rng, (h, config.micro_count), h)
    p["head_beta.b"] = _uniform(rng, (config.micro_count,), h)
    return p


def layer_params(params, prefix: str, i: int) -> dict:
    return {k: params[f"{prefix}.{i}.{k}"] for k in _LAYER_KEYS}


# -- encoder ------------------------------------------------------------


def scaled_dot_attention(q, k, v, pad_mask: np.ndarray | None = None):
    """softmax(q k^T / sqrt(key_dim)) v over the last two axes.

    ``pad_mask`` marks padded key positions (True = pad); they receive
    exactly zero attention weight.
    """
    qs, ks, vs = ad.value(q).shape, ad.value(k).shape, ad.value(v).shape
    if qs[-1] != ks[-1] or ks[-2] != vs[-2]:
        raise ShapeError(f"scaled_dot_attention: q {qs}, k {ks}, v {vs}")
    mask = None
    if pad_mask is not None:
        pad_mask = np.asarray(pad_mask, dtype=bool)
        if pad_mask.shape[-1] != ks[-2]:
            raise ShapeError(f"scaled_dot_attention: pad_mask length {pad_mask.shape[-1]} != {ks[-2]} keys")
        mask = np.expand_dims(pad_mask, -2)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, _swap_last(len(ks)))), 1.0 / np.sqrt(ks[-1]))
    return ad.matmul(ad.softmax(scores, mask), v)


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def multi_head_attention(x, lp: dict, pad_mask: np.ndarray | None, num_heads: int):
    """x is (..., m, d); heads split d into num_heads slices of d // num_heads."""
    shape = ad.value(x).shape
    *lead, m, d = shape
    if d % num_heads:
        raise ShapeError(f"multi_head_attention: width {d} not divisible by {num_heads} heads")
    if ad.value(lp["wq"]).shape != (d, d):
        raise ShapeError(f"multi_head_attention: projection shape {ad.value(lp['wq']).shape} for width {d}")
    dk = d // num_heads
    n = len(lead)
    split_axes = (*range(n), n + 1, n, n + 2)

    def heads(w):
        return ad.transpose(ad.reshape(ad.matmul(x, w), (*lead, m, num_heads, dk)), split_axes)

    if pad_mask is not None:
        pad_mask = np.expand_dims(np.asarray(pad_mask, dtype=bool), -2)
    out = scaled_dot_attention(heads(lp["wq"]), heads(lp["wk"]), heads(lp["wv"]), pad_mask)
    merged = ad.reshape(ad.transpose(out, split_axes), (*lead, m, d))
    return ad.matmul(merged, lp["wo"])


def encoder_layer(x, lp: dict, pad_mask, num_heads: int, eps: float = 1e-5):
    h = ad.layer_norm(ad.add(x, multi_head_attention(x, lp, pad_mask, num_heads)), lp["ln1_g"], lp["ln1_b"], eps)
    ff = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(h, lp["w1"]), lp["b1"])), lp["w2"]), lp["b2"])
    return ad.layer_norm(ad.add(h, ff), lp["ln2_g"], lp["ln2_b"], eps)


def encode_ids(ids: np.ndarray, params, config: ModelConfig, prefix: str = "encoder"):
    """Pooled contextual vector(s) for an id array of shape (..., max_len)."""
    ids = np.asarray(ids)
    m = ids.shape[-1]
    if m > config.max_len:
        raise ShapeError(f"sentence length {m} exceeds max_len {config.max_len}")
    x = ad.add(ad.embed(params["embedding"], ids), positional_encoding(m, config.embed_dim))
    pad = ids == PAD
    for i in range(config.num_layers):
        x = encoder_layer(x, layer_params(params, prefix, i), pad, config.num_heads, config.norm_eps)
    return ad.masked_mean(x, ~pad)


def encode_stack(sentence: EncodedSentence | np.ndarray, params, config: ModelConfig, prefix: str = "encoder"):
    ids = sentence.ids if isinstance(sentence, EncodedSentence) else sentence
    return encode_ids(ids, params, config, prefix)


def encode_pair(name_ids, act_ids, params, config: ModelConfig):
    pn, pe = config.encoder_prefixes()
    if config.shared_encoder and np.shape(name_ids) == np.shape(act_ids) and np.ndim(name_ids) == 2:
        n = len(name_ids)
        both = encode_ids(np.concatenate([name_ids, act_ids]), params, config, pn)
        return ad.getitem(both, slice(0, n)), ad.getitem(both, slice(n, None))
    return encode_ids(name_ids, params, config, pn), encode_ids(act_ids, params, config, pe)


# -- fusion & heads -----------------------------------------------------


def fusion_hidden(t_n, t_e, params):
    """Shared ReLU layer over Concat(t_n, t_e)."""
    if ad.value(t_n).shape != ad.value(t_e).shape:
        raise ShapeError(f"context_fusion: {ad.value(t_n).shape} vs {ad.value(t_e).shape}")
    z = ad.concat([t_n, t_e], axis=-1)
    return ad.relu(ad.add(ad.matmul(_as_rows(z), params["fusion.w"]), params["fusion.b"]))


def _as_rows(z):
    return ad.reshape(z, (1, -1)) if ad.value(z).ndim == 1 else z


def head(hidden, params, lam: str, config: ModelConfig):
    key = {"alpha": "head_alpha", "beta": "head_beta"}[lam]
    logits = ad.add(ad.matmul(hidden, params[key + ".w"]), params[key + ".b"])
    if config.head_activation == "softmax":
        return ad.softmax(logits)
    return ad.sigmoid(logits)


def context_fusion(t_n, t_e, params, lam: str, config: ModelConfig):
    """Score vector(s) of head ``lam`` ('alpha' = macro, 'beta' = micro)."""
    single = ad.value(t_n).ndim == 1
    out = head(fusion_hidden(t_n, t_e, params), params, lam, config)
    return ad.getitem(out, 0) if single else out


def forward(name_ids, act_ids, params, config: ModelConfig):
    """(O_alpha, O_beta) for id matrices of shape (batch, max_len)."""
    t_n, t_e = encode_pair(name_ids, act_ids, params, config)
    hidden = fusion_hidden(t_n, t_e, params)
    return head(hidden, params, "alpha", config), head(hidden, params, "beta", config)


def model_forward(name: EncodedSentence, activity: EncodedSentence, params, config: ModelConfig) -> PredictionPair:
    o_a, o_b = forward(name.ids[None, :], activity.ids[None, :], params, config)
    return PredictionPair(ad.value(o_a)[0], ad.value(o_b)[0])


def apply_scenario(name_ids: np.ndarray, act_ids: np.ndarray, scenario: str):
    """Blank out the unused descriptor with all-PAD sentences."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if scenario == "name_only":
        act_ids = np.zeros_like(act_ids)
    elif scenario == "activity_only":
        name_ids = np.zeros_like(name_ids)
    return name_ids, act_ids


@dataclass
class DragoNet:
    """Trained parameters bundled with the vocabulary and taxonomy they belong to."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab: Vocabulary
    taxonomy: Taxonomy
    scenario: str = "both"

    def encode(self, transactions: Sequence) -> tuple[np.ndarray, np.ndarray]:
        m = self.config.max_len
        name_ids = encode_many((t.merchant_name for t in transactions), self.vocab, m)
        act_ids = encode_many((t.activity for t in transactions), self.vocab, m)
        return apply_scenario(name_ids, act_ids, self.scenario)

    def scores(self, transactions: Sequence, batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
        name_ids, act_ids = self.encode(transactions)
        return self.scores_from_ids(name_ids, act_ids, batch_size)

    def scores_from_ids(self, name_ids, act_ids, batch_size: int = 512):
        alphas, betas = [], []
        for s in range(0, len(name_ids), batch_size):
            a, b = forward(name_ids[s : s + batch_size], act_ids[s : s + batch_size], self.params, self.config)
            alphas.append(a)
            betas.append(b)
        if not alphas:
            return np.zeros((0, self.config.macro_count)), np.zeros((0, self.config.micro_count))
        return np.concatenate(alphas), np.concatenate(betas)

    def forward(self, txn) -> PredictionPair:
        o_a, o_b = self.scores([txn])
        return PredictionPair(o_a[0], o_b[0], taxonomy_attention(o_a[0], o_b[0], self.taxonomy))

    def predict_indices(self, transactions: Sequence, with_tal: bool = True):
        o_a, o_b = self.scores(transactions)
        return resolve(o_a, o_b, self.taxonomy, with_tal)

    def predict(self, txn, with_tal: bool = True) -> tuple[str, str]:
        macro, micro = self.predict_indices([txn], with_tal)
        return self.taxonomy.macros[macro[0]], self.taxonomy.micros[micro[0]]

    def embeddings(self, transactions: Sequence, kind: str = "fused", batch_size: int = 512) -> np.ndarray:
        """Pooled name / activity vectors, or the shared fusion layer output."""
        if kind not in ("name", "activity", "fused"):
            raise ConfigError(f"unknown embedding kind {kind!r}")
        name_ids, act_ids = self.encode(transactions)
        out = []
        for s in range(0, len(name_ids), batch_size):
            t_n, t_e = encode_pair(name_ids[s : s + batch_size], act_ids[s : s + batch_size], self.params, self.config)
            if kind == "fused":
                out.append(fusion_hidden(t_n, t_e, self.params))
            else:
                out.append(t_n if kind == "name" else t_e)
        width = self.config.fusion_hidden if kind == "fused" else self.config.embed_dim
        return np.concatenate(out) if out else np.zeros((0, width))
