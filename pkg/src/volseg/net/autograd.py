"""Minimal reverse-mode tape over numpy arrays.

A Node wraps an array plus a closure that maps the output gradient to
parent gradients.  backward() runs one reverse topological pass and can
seed several roots at once (the multi-supervision heads).
"""

import numpy as np


class Node:
    __slots__ = ("data", "grad", "parents", "backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = data
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape


class Param(Node):
    """Leaf node with a name and velocity slot for the optimizer."""

    __slots__ = ("name", "velocity")

    def __init__(self, data, name):
        super().__init__(np.asarray(data))
        self.name = name
        self.velocity = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = None


def _toposort(roots):
    order = []
    seen = set()
    stack = [(r, False) for r in roots]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before children


def backward(seeds):
    """Run backprop from [(node, grad_array), ...] seed pairs."""
    roots = [n for n, _ in seeds]
    order = _toposort(roots)
    for node, g in seeds:
        node.grad = g if node.grad is None else node.grad + g
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(node.grad)):
            if pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg


# -- stateless ops ---------------------------------------------------------

def add(a, b):
    return Node(a.data + b.data, (a, b), lambda g: (g, g))


def concat_channels(nodes):
    datas = [n.data for n in nodes]
    splits = np.cumsum([d.shape[1] for d in datas])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=1))

    return Node(np.concatenate(datas, axis=1), tuple(nodes), back)


def relu(x):
    mask = x.data > 0

    def back(g):
        return (g * mask,)

    return Node(x.data * mask, (x,), back)


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        return (g * y * (1.0 - y),)

    return Node(y, (x,), back)


def avg_pool_ceil(x, rate):
    """Average pooling with kernel = stride = rate; edge windows shrink."""
    if rate == 1:
        return Node(x.data, (x,), lambda g: (g,))
    spatial = x.data.shape[2:]
    idx = [np.arange(0, n, rate) for n in spatial]
    counts = [np.minimum(rate, n - ix) for n, ix in zip(spatial, idx)]
    y = x.data
    for axis, ix in enumerate(idx):
        y = np.add.reduceat(y, ix, axis=axis + 2)
    denom = (counts[0][:, None, None] * counts[1][None, :, None]
             * counts[2][None, None, :]).astype(y.dtype)
    y = y / denom

    def back(g):
        gp = g / denom
        for axis, cts in enumerate(counts):
            gp = np.repeat(gp, cts, axis=axis + 2)
        return (np.ascontiguousarray(gp),)

    return Node(np.ascontiguousarray(y), (x,), back)


def upsample_nearest(x, rate, out_spatial):
    """Nearest-neighbor upsampling; inverse index map is i // rate."""
    if rate == 1:
        return Node(x.data, (x,), lambda g: (g,))
    y = x.data
    for axis, n in enumerate(out_spatial):
        y = np.repeat(y, rate, axis=axis + 2)
        y = y.take(range(n), axis=axis + 2)
    idx = [np.arange(0, n, rate) for n in out_spatial]

    def back(g):
        for axis, ix in enumerate(idx):
            g = np.add.reduceat(g, ix, axis=axis + 2)
        return (np.ascontiguousarray(g),)

    return Node(np.ascontiguousarray(y), (x,), back)
