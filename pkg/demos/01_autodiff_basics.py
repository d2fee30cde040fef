#!/usr/bin/env python3
"""Tour of the autodiff engine: tensors, ops, backward, Adam.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from gatpad.diffengine import Adam, ParamSet, Tensor, backward, ops
from gatpad.diffengine.gradcheck import check_grads

# --- forward ops record a tape -------------------------------------------
a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
b = Tensor([[1.0], [1.0]])
out = ops.matmul(a, b)
print("matmul result:", out.data.ravel())

# --- backward fills .grad on every trainable leaf -------------------------
loss = ops.sum_all(out)
backward(loss)
print("d(sum)/d(a):\n", a.grad)

# --- convolution with the fixed 3x3 / pad-1 kernel ------------------------
x = Tensor(np.ones((1, 3, 3)), requires_grad=True)
k = Tensor(np.ones((1, 1, 3, 3)), requires_grad=True)
y = ops.conv2d(x, k, stride=1)
print("conv of ones, center value:", y.data[0, 1, 1], "(a full 3x3 window)")

# --- every op is verified against 64-bit central differences --------------
rng = np.random.default_rng(0)
err = check_grads(
    lambda x, k: ops.sum_all(ops.relu(ops.conv2d(x, k, stride=2))),
    {"x": rng.normal(size=(2, 5, 5)), "k": rng.normal(size=(3, 2, 3, 3))},
)
print(f"conv+relu finite-difference error: {err:.2e}")

# --- Adam drives a toy quadratic to its minimum ---------------------------
params = ParamSet()
params.add("w", Tensor([0.0]))
opt = Adam(params, lr=0.1, weight_decay=0.0)
target = Tensor([2.0])
for step in range(100):
    params.zero_grad()
    diff = ops.sub(params["w"], target)
    backward(ops.sum_all(ops.mul(diff, diff)))
    opt.step()
print("after 100 Adam steps on (w - 2)^2: w =", float(params["w"].data[0]))
