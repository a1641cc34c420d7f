"""Parameter containers and the toy generator / discriminator networks."""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import LengthMismatch, MissingGrad
from . import tensor as T


class ParamSet:
    """Ordered, named parameters.  Registration order fixes the flattening order."""

    def __init__(self, named):
        named = list(named)
        names = [n for n, _ in named]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        self._names = tuple(names)
        self._tensors = tuple(t for _, t in named)
        for name, t in named:
            t.name = name
            t.requires_grad = True

    def __iter__(self):
        return iter(zip(self._names, self._tensors))

    def __len__(self):
        return len(self._tensors)

    def __getitem__(self, name):
        return self._tensors[self._names.index(name)]

    @property
    def names(self):
        return self._names

    @property
    def tensors(self):
        return self._tensors

    @property
    def size(self):
        return int(np.sum([t.data.size for t in self._tensors]))

    def zero_grad(self):
        for t in self._tensors:
            t.grad = None

    def flatten(self):
        return np.concatenate([t.data.reshape(-1) for t in self._tensors])

    def assign(self, vec):
        for t, chunk in zip(self._tensors, self.unflatten(vec)):
            t.data = chunk

    def unflatten(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise LengthMismatch(f"expected vector of length {self.size}, got {vec.shape}")
        out, start = [], 0
        for t in self._tensors:
            out.append(vec[start:start + t.data.size].reshape(t.shape).copy())
            start += t.data.size
        return out

    def state(self):
        return {n: t.data.copy() for n, t in self}

    def load_state(self, arrays):
        for name, t in self:
            if name not in arrays:
                raise KeyError(name)
            if arrays[name].shape != t.shape:
                raise LengthMismatch(f"{name}: shape {arrays[name].shape} != {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)


def flatten_grads(params: ParamSet) -> np.ndarray:
    missing = [n for n, t in params if t.grad is None]
    if missing:
        raise MissingGrad(f"no gradient for {missing}")
    return np.concatenate([t.grad.reshape(-1) for _, t in params])


@contextmanager
def frozen(params: ParamSet):
    """Stop gradient accumulation into ``params`` for the duration of the block."""
    for t in params.tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t in params.tensors:
            t.requires_grad = True


def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Generator:
    """Mask estimator over a compressed noisy magnitude [batch, frames, bins].

    Three 5x5 conv+relu layers followed by a per-bin linear head and a
    sigmoid, so the mask has the input's shape and lies in (0, 1).
    """

    def __init__(self, channels=8, kernel=5, seed=0, head_bias=1.0):
        rng = np.random.default_rng(seed)
        c, k = channels, kernel
        self.channels, self.kernel = channels, kernel
        self.params = ParamSet([
            ("conv1.w", T.tensor(_he(rng, (k, k, 1, c), k * k))),
            ("conv1.b", T.tensor(np.zeros(c))),
            ("conv2.w", T.tensor(_he(rng, (k, k, c, c), k * k * c))),
            ("conv2.b", T.tensor(np.zeros(c))),
            ("conv3.w", T.tensor(_he(rng, (k, k, c, c), k * k * c))),
            ("conv3.b", T.tensor(np.zeros(c))),
            ("head.w", T.tensor(rng.standard_normal((c, 1)) * np.sqrt(1.0 / c))),
            ("head.b", T.tensor(np.full(1, head_bias))),
        ])

    def __call__(self, feats):
        p = self.params
        x = T.reshape(feats, feats.shape + (1,))
        for i in (1, 2, 3):
            x = T.relu(T.conv2d(x, p[f"conv{i}.w"], p[f"conv{i}.b"]))
        x = T.add(T.matmul(x, p["head.w"]), p["head.b"])
        return T.sigmoid(T.reshape(x, feats.shape))

    def config(self):
        return {"channels": self.channels, "kernel": self.kernel}


class Discriminator:
    """Scores a (candidate, reference) pair of compressed magnitudes.

    The pair is stacked as two channels, mean-pooled along frequency, passed
    through three 5x5 conv+relu layers, globally averaged and mapped to one
    real number per example.
    """

    def __init__(self, channels=8, kernel=5, freq_pool=4, seed=1):
        rng = np.random.default_rng(seed)
        c, k = channels, kernel
        self.channels, self.kernel, self.freq_pool = channels, kernel, freq_pool
        self.params = ParamSet([
            ("conv1.w", T.tensor(_he(rng, (k, k, 2, c), k * k * 2))),
            ("conv1.b", T.tensor(np.zeros(c))),
            ("conv2.w", T.tensor(_he(rng, (k, k, c, c), k * k * c))),
            ("conv2.b", T.tensor(np.zeros(c))),
            ("conv3.w", T.tensor(_he(rng, (k, k, c, c), k * k * c))),
            ("conv3.b", T.tensor(np.zeros(c))),
            ("dense.w", T.tensor(rng.standard_normal((c, 1)) * np.sqrt(1.0 / c))),
            ("dense.b", T.tensor(np.full(1, 0.5))),
        ])

    def __call__(self, cand, ref):
        p = self.params
        shape = cand.shape + (1,)
        x = T.concat([T.reshape(cand, shape), T.reshape(ref, shape)], axis=-1)
        if self.freq_pool > 1:
            x = T.avgpool(x, self.freq_pool, axis=2)
        for i in (1, 2, 3):
            x = T.relu(T.conv2d(x, p[f"conv{i}.w"], p[f"conv{i}.b"]))
        x = T.mean(x, axis=(1, 2))
        x = T.add(T.matmul(x, p["dense.w"]), p["dense.b"])
        return T.reshape(x, (cand.shape[0],))

    def config(self):
        return {"channels": self.channels, "kernel": self.kernel, "freq_pool": self.freq_pool}
