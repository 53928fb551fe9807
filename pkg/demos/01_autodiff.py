"""Walk through the autodiff engine: build a graph, backpropagate, check against finite differences."""
import numpy as np

from unmixingsr.engine import Tensor, backward, conv2d, layer_norm, no_grad, relu

rng = np.random.default_rng(0)

# A Tensor wraps a float64 array; requires_grad marks it as a leaf we want gradients for.
x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
kernel = Tensor(rng.normal(size=(4, 2, 3, 3)), requires_grad=True)
gain, offset = Tensor(np.ones(4)), Tensor(np.zeros(4))

# conv -> layer norm -> relu -> mean: a tiny slice of what a GRAM does
loss = relu(layer_norm(conv2d(x, kernel, padding=1), gain, offset)).mean()
backward(loss)
print("loss", loss.item())
print("dL/dkernel shape", kernel.grad.shape)


# Central differences on one kernel entry, with graph recording switched off
def loss_at(k):
    with no_grad():
        return relu(layer_norm(conv2d(Tensor(x.value), Tensor(k), padding=1), gain, offset)).mean().item()


h = 1e-5
k = kernel.value.copy()
k[1, 0, 2, 1] += h
up = loss_at(k)
k[1, 0, 2, 1] -= 2 * h
down = loss_at(k)
print("autodiff   ", kernel.grad[1, 0, 2, 1])
print("finite diff", (up - down) / (2 * h))

# Gradients accumulate: a second backward doubles them until zero_grad()
first = kernel.grad.copy()
backward(relu(layer_norm(conv2d(x, kernel, padding=1), gain, offset)).mean())
print("doubled:", np.allclose(kernel.grad, 2 * first))
kernel.zero_grad()
