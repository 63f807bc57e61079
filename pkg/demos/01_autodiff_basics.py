"""
Reverse-mode autodiff on float32 arrays
=======================================

The whole package runs on one small Tensor class: eager numpy ops that
record a tape, and a backward() that walks it. This script builds a few
graphs by hand and checks the gradients against central differences.
"""

import numpy as np

from salypath import ConvLayer, Tensor, conv2d, maxpool2, relu, sigmoid

rng = np.random.default_rng(0)

# A tensor only accumulates gradients if asked. Leaves default to
# requires_grad=False so data arrays stay cheap.
x = Tensor(rng.normal(size=(3, 4)).astype(np.float32), requires_grad=True)
w = Tensor(rng.normal(size=(3, 4)).astype(np.float32), requires_grad=True)

loss = (sigmoid(x * w) ** 2).mean()
loss.backward()
print("loss        =", loss.item())
print("x.grad shape:", x.grad.shape, " w.grad shape:", w.grad.shape)

# Check one coordinate of w.grad numerically. Central differences on the
# float32 forward pass agree to ~1e-4 relative; good enough to catch any
# real chain-rule mistake.
def f():
    return (sigmoid(x * w) ** 2).mean().item()

eps = 1e-3
orig = float(w.data[1, 0])
w.data[1, 0] = orig + eps
up = f()
w.data[1, 0] = orig - eps
dn = f()
w.data[1, 0] = orig

numeric = (up - dn) / (2 * eps)
print(f"w.grad[1,0] analytic {w.grad[1, 0]:+.6f}  numeric {numeric:+.6f}")

# There is deliberately no dense/matmul op: everywhere the network needs
# a linear layer it uses a 1x1 convolution (see the attention MLP), so
# conv2d is the one matmul-shaped workhorse.

# The conv/pool path used by the encoder. Gradients flow through im2col
# convolution and 2x2 max pooling the same way; backward() leaves .grad
# on intermediates as well as leaves.
img = Tensor(rng.normal(size=(1, 3, 8, 8)).astype(np.float32), requires_grad=True)
layer = ConvLayer.init(3, 4, 3, rng, padding=1)
pre = relu(conv2d(img, layer))
pooled = maxpool2(pre)
print("\nconv->relu->pool:", img.shape, "->", pooled.shape)

pooled.sum().backward()
print("d(sum)/d(img) mean |g| =", float(np.abs(img.grad).mean()))

# Max pooling routes gradient only to the winner of each 2x2 window, so
# at most a quarter of the pre-pool activations see any gradient (less
# where relu already zeroed the winner).
frac = float((pre.grad != 0).mean())
print(f"fraction of pre-pool activations with nonzero grad = {frac:.3f} (max 0.25)")
