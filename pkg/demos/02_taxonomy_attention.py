"""
Two-level taxonomy and the taxonomy-aware attention rule
========================================================

The bundled taxonomy has 15 macro categories and 82 micro categories,
each micro with exactly one macro parent. At inference the winning macro
masks the micro scores down to its own children, so the predicted pair
can never contradict the hierarchy.
"""

import numpy as np

from dragonet.taxonomy import build_mask, load_taxonomy, resolve, taxonomy_attention

tax = load_taxonomy()
print(tax.n_macros, "macros,", tax.n_micros, "micros")
for j, macro in enumerate(tax.macros[:4]):
    print(f"  {macro:15s} -> {', '.join(tax.micros[i] for i in tax.children(j))}")

# The mask for Pets keeps three micro slots.
pets = build_mask(tax, tax.macro_index("Pets"))
print("Pets mask keeps:", [tax.micros[i] for i in np.flatnonzero(pets)])

# Hand-made scores: the macro head is confident in Food, while the micro
# head's single best guess is Veterinary, which lives under Pets.
o_alpha = np.full(tax.n_macros, 0.1)
o_alpha[tax.macro_index("Food")] = 0.8
o_beta = np.full(tax.n_micros, 0.05)
o_beta[tax.micro_index("Veterinary")] = 0.9
o_beta[tax.micro_index("Bar")] = 0.4

corrected = taxonomy_attention(o_alpha, o_beta, tax)
for tal in (False, True):
    macro, micro = resolve(o_alpha, o_beta, tax, with_tal=tal)
    print(f"with_tal={tal!s:5s}: {tax.macros[macro[0]]} / {tax.micros[micro[0]]}")

# Nonzero entries after the mask all belong to Food.
print("surviving micro scores:", {tax.micros[i]: float(corrected[i]) for i in np.flatnonzero(corrected)})

# Applying the rule twice changes nothing.
print("idempotent:", np.array_equal(taxonomy_attention(o_alpha, corrected, tax), corrected))
