"""
Tape autodiff and gradient checking
===================================

Every trainable piece of the classifier is written with a handful of
differentiable numpy ops. This script records a small computation on a
tape, reads the gradients back and compares them with central
finite differences.
"""

import numpy as np

from dragonet.numerics import autodiff as ad
from dragonet.numerics.adam import AdamState, adam_step
from dragonet.numerics.gradcheck import grad_check

rng = np.random.default_rng(0)

# A two-layer scorer: ReLU(x W1) W2, softmax, negative log-likelihood.
x = rng.normal(size=(5, 4))
w1 = rng.normal(size=(4, 6))
w2 = rng.normal(size=(6, 3))
y = np.array([0, 2, 1, 1, 0])


def loss(w1, w2):
    probs = ad.softmax(ad.matmul(ad.relu(ad.matmul(x, w1)), w2))
    return ad.nll(probs, y)


# With plain arrays the ops just compute values.
print("loss on plain arrays:", float(loss(w1, w2)))

# With tape leaves they also record how to run backwards.
tape = ad.Tape()
a, b = tape.leaf(w1), tape.leaf(w2)
out = loss(a, b)
g1, g2 = tape.gradients(out, [a, b])
print("tape entries:", len(tape.nodes))
print("dL/dW2 row 0:", np.round(g2[0], 5))

# grad_check perturbs every entry by +-eps and reports the worst
# relative disagreement with the tape.
print("max relative error:", grad_check(loss, [w1, w2]))

# A few Adam steps on the same loss.
params = {"w1": w1, "w2": w2}
state = AdamState(lr=0.05)
for step in range(50):
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    value = loss(leaves["w1"], leaves["w2"])
    grads = dict(zip(params, tape.gradients(value, list(leaves.values()))))
    params = adam_step(params, grads, state)
    if step % 10 == 0:
        print(f"step {step:2d} loss {float(value.value):.4f}")
