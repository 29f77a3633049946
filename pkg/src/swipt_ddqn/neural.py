"""Small dense Q-networks with hand-written backpropagation and Adam.

Everything is float64. Parameters of a network are a flat list
``[W0, b0, W1, b1, ...]`` so optimizers and checkpoints can treat plain and
dueling networks the same way.
"""

from __future__ import annotations

import copy

import numpy as np

from .utils import as_generator, check_features


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _init_stack(rng, dims) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        params.append(_glorot(rng, fan_in, fan_out))
        params.append(np.zeros(fan_out))
    return params


def _stack_forward(params, X, relu_last=False):
    """Affine layers with ReLU between them; returns output and the layer inputs."""
    inputs = []
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        inputs.append(h)
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1 or relu_last:
            h = np.maximum(h, 0.0)
    return h, inputs


def _stack_backward(params, inputs, out, dout, relu_last=False):
    """Gradients of the stack parameters and of its input."""
    n_layers = len(params) // 2
    grads = [None] * len(params)
    d = dout
    if relu_last:
        d = d * (out > 0)
    for i in reversed(range(n_layers)):
        grads[2 * i] = inputs[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ params[2 * i].T
        if i > 0:
            # inputs[i] is the ReLU output of layer i-1
            d = d * (inputs[i] > 0)
    return grads, d


class QNetwork:
    """Fully connected net, ReLU on hidden layers and a linear output.

    Parameters
    ----------
    layer_dims : sequence of int
        ``(n_inputs, *hidden, n_outputs)``; ``(6, 512, 128, 121)`` by default.
    random_state : int, Generator or None
    """

    def __init__(self, layer_dims=(6, 512, 128, 121), random_state=None):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims}")
        self.params = _init_stack(as_generator(random_state), self.layer_dims)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = check_features(X, self.n_inputs)
        out, _ = _stack_forward(self.params, X)
        return out[0] if single else out

    __call__ = forward

    def forward_cache(self, X):
        out, inputs = _stack_forward(self.params, X)
        return out, inputs

    def backward(self, cache, dout) -> list[np.ndarray]:
        grads, _ = _stack_backward(self.params, cache, None, dout)
        return grads

    def copy(self) -> "QNetwork":
        return copy.deepcopy(self)


class DuelingQNetwork:
    """Dueling architecture: shared ReLU trunk, value and advantage streams.

    ``Q = V + A - mean(A)``. Default sizes give a 6->512 trunk and two
    512->128 streams ending in 1 (value) and 121 (advantage) units.
    """

    def __init__(self, n_inputs=6, n_actions=121, trunk=512, stream=128, random_state=None):
        rng = as_generator(random_state)
        self.n_inputs, self.n_outputs = int(n_inputs), int(n_actions)
        self.trunk_size, self.stream_size = int(trunk), int(stream)
        self.layer_dims = (self.n_inputs, self.trunk_size, self.stream_size, self.n_outputs)
        trunk_p = _init_stack(rng, (self.n_inputs, self.trunk_size))
        value_p = _init_stack(rng, (self.trunk_size, self.stream_size, 1))
        adv_p = _init_stack(rng, (self.trunk_size, self.stream_size, self.n_outputs))
        self.params = trunk_p + value_p + adv_p

    def _split(self):
        return self.params[:2], self.params[2:6], self.params[6:10]

    def streams(self, X):
        """Value ``(n, 1)`` and advantage ``(n, z)`` outputs for a batch."""
        trunk_p, value_p, adv_p = self._split()
        h, _ = _stack_forward(trunk_p, X, relu_last=True)
        v, _ = _stack_forward(value_p, h)
        a, _ = _stack_forward(adv_p, h)
        return v, a

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = check_features(X, self.n_inputs)
        out, _ = self.forward_cache(X)
        return out[0] if single else out

    __call__ = forward

    def forward_cache(self, X):
        trunk_p, value_p, adv_p = self._split()
        h, trunk_in = _stack_forward(trunk_p, X, relu_last=True)
        v, value_in = _stack_forward(value_p, h)
        a, adv_in = _stack_forward(adv_p, h)
        q = v + a - a.mean(axis=1, keepdims=True)
        return q, (trunk_in, h, value_in, adv_in)

    def backward(self, cache, dout) -> list[np.ndarray]:
        trunk_p, value_p, adv_p = self._split()
        trunk_in, h, value_in, adv_in = cache
        dv = dout.sum(axis=1, keepdims=True)
        da = dout - dout.mean(axis=1, keepdims=True)
        g_value, dh_v = _stack_backward(value_p, value_in, None, dv)
        g_adv, dh_a = _stack_backward(adv_p, adv_in, None, da)
        g_trunk, _ = _stack_backward(trunk_p, trunk_in, h, dh_v + dh_a, relu_last=True)
        return g_trunk + g_value + g_adv

    def copy(self) -> "DuelingQNetwork":
        return copy.deepcopy(self)


def mse_loss_and_grad(network, states, actions, targets):
    """Mean squared TD error on the taken actions only.

    Returns ``(loss, grads)`` with ``loss = mean((target - Q(s, a))**2)`` and
    one gradient array per parameter.
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(actions)
    if n == 0:
        raise ValueError("empty batch")
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(targets))):
        raise FloatingPointError("non-finite states or targets in loss batch")
    q, cache = network.forward_cache(states)
    rows = np.arange(n)
    err = targets - q[rows, actions]
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    dout = np.zeros_like(q)
    dout[rows, actions] = -2.0 * err / n
    return loss, network.backward(cache, dout)


class Adam:
    """Adam with bias correction, updating a parameter list in place."""

    def __init__(self, params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if not 0 < lr < 1:
            raise ValueError(f"learning rate must lie in (0, 1), got {lr}")
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        if len(grads) != len(params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1**self.t)
        sqrt_c2 = np.sqrt(1.0 - b2**self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            denom = np.sqrt(v)
            denom /= sqrt_c2
            denom += self.eps
            p -= step_size * m / denom


def adam_step(adam: Adam, network, grads):
    adam.step(network.params, grads)
    return network


class StepDecay:
    """``lr = initial * factor ** floor(episode / interval)``."""

    def __init__(self, initial=2e-4, factor=0.5, interval=500):
        if not 0 < initial < 1:
            raise ValueError("initial learning rate must lie in (0, 1)")
        if interval < 1:
            raise ValueError("interval must be >= 1")
        self.initial, self.factor, self.interval = initial, factor, int(interval)

    def __call__(self, episode: int) -> float:
        if episode < 1:
            raise ValueError("episodes are numbered from 1")
        return self.initial * self.factor ** (episode // self.interval)


def scheduler_step(adam: Adam, schedule: StepDecay, episode: int) -> float:
    adam.lr = schedule(episode)
    return adam.lr


def copy_parameters(source, target=None):
    """Deep copy of ``source``; with ``target`` given, overwrite its parameters in place."""
    if target is None:
        return source.copy()
    if len(target.params) != len(source.params):
        raise ValueError("networks do not share a topology")
    for dst, src in zip(target.params, source.params):
        np.copyto(dst, src)
    return target
