"""Small neural building blocks on the tape: GRU cell, MLP, linear layer.

Each layer owns a name prefix inside a ParamStore and operates on (B, d)
batches.  Weight layout for the GRU is fused: wx (in, 3H) and wh (H, 3H)
hold the reset, update, and candidate blocks side by side.
"""

import numpy as np

from . import autodiff as ad
from .params import uniform_init


class GRUCell:
    """Gated recurrent unit.

    next = u * prev + (1 - u) * cand, with reset gate r applied to the
    hidden contribution of the candidate.  With all-zero weights the update
    halves the previous state, so a zero initial state stays zero.
    """

    def __init__(self, prefix, in_dim, hidden):
        self.prefix = prefix
        self.in_dim = in_dim
        self.hidden = hidden

    def init(self, store, tag, rng):
        h = self.hidden
        store.create(f"{self.prefix}.wx", uniform_init(rng, (self.in_dim, 3 * h), self.in_dim), tag)
        store.create(f"{self.prefix}.wh", uniform_init(rng, (h, 3 * h), h), tag)
        store.create(f"{self.prefix}.b", np.zeros(3 * h), tag)

    def step(self, store, prev, x):
        """prev (B,H), x (B,in) -> (B,H)."""
        h = self.hidden
        px = ad.add(ad.matmul(x, store.node(f"{self.prefix}.wx")), store.node(f"{self.prefix}.b"))
        ph = ad.matmul(prev, store.node(f"{self.prefix}.wh"))
        r = ad.sigmoid(ad.add(ad.narrow(px, -1, 0, h), ad.narrow(ph, -1, 0, h)))
        u = ad.sigmoid(ad.add(ad.narrow(px, -1, h, h), ad.narrow(ph, -1, h, h)))
        cand = ad.tanh(ad.add(ad.narrow(px, -1, 2 * h, h), ad.mul(r, ad.narrow(ph, -1, 2 * h, h))))
        keep = ad.add_const(ad.neg(u), 1.0)
        return ad.add(ad.mul(u, prev), ad.mul(keep, cand))


class Linear:
    def __init__(self, prefix, in_dim, out_dim):
        self.prefix = prefix
        self.in_dim = in_dim
        self.out_dim = out_dim

    def init(self, store, tag, rng):
        store.create(f"{self.prefix}.w", uniform_init(rng, (self.in_dim, self.out_dim), self.in_dim), tag)
        store.create(f"{self.prefix}.b", np.zeros(self.out_dim), tag)

    def apply(self, store, x):
        return ad.add(ad.matmul(x, store.node(f"{self.prefix}.w")), store.node(f"{self.prefix}.b"))


class MLP:
    """Dense stack with tanh hidden activations and a linear output."""

    def __init__(self, prefix, dims, out_tanh=False):
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.prefix = prefix
        self.dims = list(dims)
        self.out_tanh = out_tanh
        self.layers = [
            Linear(f"{prefix}.l{i}", dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        ]

    def init(self, store, tag, rng):
        for layer in self.layers:
            layer.init(store, tag, rng)

    def apply(self, store, x):
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer.apply(store, h)
            if i < last or self.out_tanh:
                h = ad.tanh(h)
        return h
