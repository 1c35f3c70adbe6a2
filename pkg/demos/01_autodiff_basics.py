"""Tape, backward, and a hand-rolled gradient-descent fit.

Everything the model stack does reduces to what this script shows:
record operations on a tape, pull gradients back, step the weights.
"""

import numpy as np

from tgsim import autodiff as ad
from tgsim.autodiff import Tape, Tensor, backward, grad_check, zero_grads

# A composite function and its gradient, checked against finite differences.
rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
x = Tensor(rng.normal(size=(3, 3)))

def f(w, x):
    return ad.mean_all(ad.square(ad.tanh(ad.matmul(w, x))))

err = grad_check(f, [w, x], eps=1e-5)
print(f"gradient check on tanh(w @ x)^2: max relative error {err:.2e}")

# Fit a logistic curve y = sigmoid(a*t + b) to noisy draws of a known curve.
t = np.linspace(-3, 3, 40)
targets = 1.0 / (1.0 + np.exp(-(1.7 * t - 0.4))) + rng.normal(0, 0.02, t.size)

a = Tensor([[0.0]], requires_grad=True)
b = Tensor([[0.0]], requires_grad=True)
t_row = Tensor(t.reshape(1, -1))
y_row = Tensor(targets.reshape(1, -1))

for step in range(400):
    zero_grads([a, b])
    with Tape():
        pred = ad.sigmoid(ad.add(ad.matmul(a, t_row), b))
        loss = ad.mean_all(ad.square(ad.subtract(pred, y_row)))
        backward(loss)
    for p in (a, b):
        p.value -= 0.5 * p.grad
    if step % 100 == 0:
        print(f"step {step:3d}  loss {loss.item():.5f}")

print(f"fitted slope {a.item():+.3f} (true +1.700), intercept {b.item():+.3f} (true -0.400)")
