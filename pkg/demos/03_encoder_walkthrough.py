"""
From merchant text to two score vectors
=======================================

A walk through the forward pass on one transaction: tokenization,
padding, positional encodings, one encoder stack shared by both text
fields, masked mean pooling, the fusion layer and the two heads.
"""

import numpy as np

from dragonet.model import (
    ModelConfig,
    context_fusion,
    encode_ids,
    init_params,
    layer_params,
    multi_head_attention,
    positional_encoding,
)
from dragonet.taxonomy import load_taxonomy
from dragonet.text import PAD, build_vocab, encode_text, tokenize

tax = load_taxonomy()

# Tokens are lowercase runs of letters and digits.
print(tokenize("John's Barbecue"), tokenize("EATING PLACES, RESTAURANTS"))

vocab = build_vocab(["john s barbecue", "eating places restaurants", "drug stores and pharmacies"])
name = encode_text("John's Barbecue", vocab, max_len=8)
activity = encode_text("EATING PLACES, RESTAURANTS", vocab, max_len=8)
print("name ids:", name.ids, "true length", name.true_length)

# Sinusoidal positions: row 0 alternates sin 0 = 0 and cos 0 = 1.
pe = positional_encoding(8, 16)
print("PE row 0:", pe[0, :6], " row 1:", np.round(pe[1, :4], 4))

config = ModelConfig(vocab_size=len(vocab), macro_count=tax.n_macros, micro_count=tax.n_micros,
                     embed_dim=16, num_heads=4, num_layers=2, max_len=8)
params = init_params(config, seed=0)
print("parameter tensors:", len(params), " scalars:", sum(p.size for p in params.values()))

# Padded key positions get no attention weight, so changing what sits in
# a padded slot leaves the real positions untouched.
x = params["embedding"][name.ids] + pe
pad = name.ids == PAD
mha = multi_head_attention(x, layer_params(params, "encoder", 0), pad, config.num_heads)
x_noisy = x.copy()
x_noisy[pad] += 100.0
mha_noisy = multi_head_attention(x_noisy, layer_params(params, "encoder", 0), pad, config.num_heads)
real = ~pad
print("real rows unchanged by pad content:", np.allclose(mha[real], mha_noisy[real]))

# Pool each field to one vector, then fuse.
t_n = encode_ids(name.ids, params, config)
t_e = encode_ids(activity.ids, params, config)
print("pooled widths:", t_n.shape, t_e.shape)
o_alpha = context_fusion(t_n, t_e, params, "alpha", config)
o_beta = context_fusion(t_n, t_e, params, "beta", config)
print("head sizes:", o_alpha.shape, o_beta.shape, " sigmoid range:", o_beta.min() > 0, o_beta.max() < 1)

# Word order matters because of the positional encodings.
swapped = name.ids.copy()
swapped[[0, 2]] = swapped[[2, 0]]
print("order-sensitive:", not np.allclose(encode_ids(swapped, params, config), t_n))

# An empty field pools to exactly zero.
print("empty field pools to zero:", not encode_ids(np.zeros(8, dtype=np.int64), params, config).any())
