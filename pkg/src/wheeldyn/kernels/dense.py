"""Dense batched passes for the network families.

Training of the net-based models (fixed history, egocentric frame) factors
into one big matrix pass over every rollout step of every segment in the
batch plus the sequential chains from :mod:`.chains`. The matrix work lives
here as plain numpy so it rides BLAS; there is nothing to gain from numba on
matmul-dominated code.

Batchnorm follows the usual train/eval split: train mode normalizes with
the statistics of the current batch (differentiating through them) and
updates running estimates with momentum 0.1 (unbiased variance); eval mode
uses the stored running estimates, which also lets the whole net collapse
into plain affine layers for rollout kernels.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..models import BN_EPS, BN_MOMENTUM, bn_layout, param_layout, unpack


def collapse_eval_net(spec, pv=None):
    """Fold eval-mode batchnorm into the affine layers.

    Returns a list of (W, b) pairs; hidden layers are followed by ReLU,
    the last pair is the raw output head. For the linear model the list has
    a single pair.
    """
    pv = spec.params if pv is None else pv
    views = unpack(pv, param_layout(spec))
    if spec.kind == "lr":
        return [(views["W"].copy(), views["b"].copy())]
    if spec.kind == "param_only":
        return []
    bn = unpack(spec.bn_stats, bn_layout(spec))
    layers = []
    for i in range(1, len(spec.hidden) + 1):
        k = views[f"g{i}"] / np.sqrt(bn[f"rv{i}"] + BN_EPS)
        W = views[f"W{i}"] * k[:, None]
        b = (views[f"b{i}"] - bn[f"rm{i}"]) * k + views[f"beta{i}"]
        layers.append((np.ascontiguousarray(W), b))
    last = len(spec.hidden) + 1
    layers.append((views[f"W{last}"].copy(), views[f"b{last}"].copy()))
    return layers


def eval_net_apply(layers, X):
    """Apply a collapsed net to standardized features (ReLU between layers)."""
    for W, b in layers[:-1]:
        X = np.maximum(X @ W.T + b, 0.0)
    W, b = layers[-1]
    return X @ W.T + b


def net_train_forward(X, spec, pv=None, update_running=False):
    """Train-mode batched forward over standardized features X of shape (N, D).

    Returns (Y, cache). Batchnorm statistics come from this batch; when
    ``update_running`` is set the running estimates in ``spec.bn_stats``
    are advanced in place.
    """
    pv = spec.params if pv is None else pv
    views = unpack(pv, param_layout(spec))
    if spec.kind == "lr":
        Y = X @ views["W"].T + views["b"]
        return Y, {"X": X, "views": views}
    N = X.shape[0]
    if N < 2:
        raise DataError("train-mode batchnorm needs a batch of at least 2 samples")
    bn = unpack(spec.bn_stats, bn_layout(spec))
    cache = {"views": views, "layers": [], "X": X}
    H = X
    for i in range(1, len(spec.hidden) + 1):
        Z = H @ views[f"W{i}"].T + views[f"b{i}"]
        mu = Z.mean(axis=0)
        var = Z.var(axis=0)
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (Z - mu) * inv
        A = views[f"g{i}"] * xhat + views[f"beta{i}"]
        mask = A > 0.0
        Hn = A * mask
        cache["layers"].append({"Hin": H, "xhat": xhat, "inv": inv, "mask": mask, "i": i})
        if update_running:
            bn[f"rm{i}"][:] = (1 - BN_MOMENTUM) * bn[f"rm{i}"] + BN_MOMENTUM * mu
            bn[f"rv{i}"][:] = (1 - BN_MOMENTUM) * bn[f"rv{i}"] + BN_MOMENTUM * var * N / (N - 1)
        H = Hn
    last = len(spec.hidden) + 1
    Y = H @ views[f"W{last}"].T + views[f"b{last}"]
    cache["Hlast"] = H
    return Y, cache


def net_train_backward(dY, cache, spec):
    """Gradients of a scalar loss through :func:`net_train_forward`.

    Returns (grad_vec, dX): a flat gradient matching the parameter layout
    and the adjoint of the standardized input features.
    """
    layout = param_layout(spec)
    grad = np.zeros(sum(int(np.prod(s)) for _, s in layout))
    gviews = unpack(grad, layout)
    views = cache["views"]
    if spec.kind == "lr":
        X = cache["X"]
        gviews["W"][:] = dY.T @ X
        gviews["b"][:] = dY.sum(axis=0)
        return grad, dY @ views["W"]
    last = len(spec.hidden) + 1
    H = cache["Hlast"]
    gviews[f"W{last}"][:] = dY.T @ H
    gviews[f"b{last}"][:] = dY.sum(axis=0)
    dH = dY @ views[f"W{last}"]
    for entry in reversed(cache["layers"]):
        i = entry["i"]
        dA = dH * entry["mask"]
        xhat = entry["xhat"]
        gviews[f"g{i}"][:] = (dA * xhat).sum(axis=0)
        gviews[f"beta{i}"][:] = dA.sum(axis=0)
        dxhat = dA * views[f"g{i}"]
        N = dxhat.shape[0]
        dZ = (entry["inv"] / N) * (N * dxhat - dxhat.sum(axis=0)
                                   - xhat * (dxhat * xhat).sum(axis=0))
        gviews[f"W{i}"][:] = dZ.T @ entry["Hin"]
        gviews[f"b{i}"][:] = dZ.sum(axis=0)
        dH = dZ @ views[f"W{i}"]
    return grad, dH
