"""Batched eval-mode rollouts.

One kernel drives every model family over a batch of segments: assemble
features in the current local frame, run the (batchnorm-collapsed) net if
the family has one, advance the actuator state if the family is formulated,
compose the local prediction into the global frame, repeat. History length
is fixed at one pose (the package default); longer histories take the
scalar reference path instead.

Kind ids: 0 lr, 1 mlp, 2 formulated_plus_mlp, 3 mlp_plus_formulated,
4 param_only. Mode ids: 0 ego, 1 translational, 2 none.
"""

from __future__ import annotations

import math

import numpy as np

from .backend import jit_or_none, select

_E = 1e-6


def _net_apply_loops(x, W1, b1, W2, b2, W3, b3, W4, b4, n_layers):
    h = np.dot(W1, x) + b1
    if n_layers == 1:
        return h
    h = np.maximum(h, 0.0)
    h = np.maximum(np.dot(W2, h) + b2, 0.0)
    h = np.maximum(np.dot(W3, h) + b3, 0.0)
    return np.dot(W4, h) + b4


def _rollout_loops(kind_id, mode_id, bins, dt, start, twist0, mean, inv_std,
                   W1, b1, W2, b2, W3, b3, W4, b4, n_layers,
                   tau_s, tau_w, gain_s, gain_w, j_lat):
    B, L, K2 = bins.shape
    D = mean.shape[0]
    preds = np.empty((B, L, 3))
    x = np.empty(D)
    for b in range(B):
        ox, oy, oth = start[b, 0], start[b, 1], start[b, 2]
        s_tw, w_tw = twist0[b, 0], twist0[b, 1]
        pth = start[b, 2]
        px, py = start[b, 0], start[b, 1]
        for i in range(L):
            # history slot in the local frame
            if mode_id == 0:
                hx = 0.0
                hy = 0.0
                hth = 0.0
            elif mode_id == 1:
                hx = 0.0
                hy = 0.0
                hth = pth
            else:
                hx = px
                hy = py
                hth = pth
            x[0] = hx
            x[1] = hy
            x[2] = hth
            for k in range(K2):
                x[3 + k] = bins[b, i, k]
            h = dt[b, i]
            if kind_id >= 2:
                a_s = 1.0 if tau_s < _E else 1.0 - math.exp(-h / tau_s)
                a_w = 1.0 if tau_w < _E else 1.0 - math.exp(-h / tau_w)
                s_tw = s_tw + (gain_s * bins[b, i, 2 * j_lat] - s_tw) * a_s
                w_tw = w_tw + (gain_w * bins[b, i, 2 * j_lat + 1] - w_tw) * a_w
            if kind_id == 4:
                rx = hx + s_tw * math.cos(hth) * h
                ry = hy + s_tw * math.sin(hth) * h
                rth = hth + w_tw * h
            elif kind_id == 3:
                fx = hx + s_tw * math.cos(hth) * h
                fy = hy + s_tw * math.sin(hth) * h
                fth = hth + w_tw * h
                x[D - 3] = fx
                x[D - 2] = fy
                x[D - 1] = fth
                xn = (x - mean) * inv_std
                out = _net_apply_loops(xn, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
                rx = fx + out[0]
                ry = fy + out[1]
                rth = fth + out[2]
            elif kind_id == 2:
                xn = (x - mean) * inv_std
                out = _net_apply_loops(xn, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
                s_tw = s_tw + out[0]
                w_tw = w_tw + out[1]
                rx = hx + s_tw * math.cos(hth) * h
                ry = hy + s_tw * math.sin(hth) * h
                rth = hth + w_tw * h
            else:
                xn = (x - mean) * inv_std
                out = _net_apply_loops(xn, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
                rx = out[0]
                ry = out[1]
                rth = out[2]
            if mode_id == 0:
                c = math.cos(oth)
                sn = math.sin(oth)
                gx = ox + c * rx - sn * ry
                gy = oy + sn * rx + c * ry
                gth = oth + rth
                ox, oy, oth = gx, gy, gth
            elif mode_id == 1:
                gx = ox + rx
                gy = oy + ry
                gth = rth
                ox, oy = gx, gy
            else:
                gx = rx
                gy = ry
                gth = rth
            preds[b, i, 0] = gx
            preds[b, i, 1] = gy
            preds[b, i, 2] = gth
            px, py, pth = gx, gy, gth
    return preds


def _net_apply_numpy(X, W1, b1, W2, b2, W3, b3, W4, b4, n_layers):
    H = X @ W1.T + b1
    if n_layers == 1:
        return H
    H = np.maximum(H, 0.0)
    H = np.maximum(H @ W2.T + b2, 0.0)
    H = np.maximum(H @ W3.T + b3, 0.0)
    return H @ W4.T + b4


def _rollout_numpy(kind_id, mode_id, bins, dt, start, twist0, mean, inv_std,
                   W1, b1, W2, b2, W3, b3, W4, b4, n_layers,
                   tau_s, tau_w, gain_s, gain_w, j_lat):
    B, L, K2 = bins.shape
    D = mean.shape[0]
    preds = np.empty((B, L, 3))
    ox = start[:, 0].copy()
    oy = start[:, 1].copy()
    oth = start[:, 2].copy()
    px = start[:, 0].copy()
    py = start[:, 1].copy()
    pth = start[:, 2].copy()
    s_tw = twist0[:, 0].copy()
    w_tw = twist0[:, 1].copy()
    X = np.empty((B, D))
    for i in range(L):
        if mode_id == 0:
            X[:, 0] = 0.0
            X[:, 1] = 0.0
            X[:, 2] = 0.0
        elif mode_id == 1:
            X[:, 0] = 0.0
            X[:, 1] = 0.0
            X[:, 2] = pth
        else:
            X[:, 0] = px
            X[:, 1] = py
            X[:, 2] = pth
        X[:, 3:3 + K2] = bins[:, i, :]
        h = dt[:, i]
        hx, hy, hth = X[:, 0].copy(), X[:, 1].copy(), X[:, 2].copy()
        if mode_id == 1:
            hth = pth.copy()
        if kind_id >= 2:
            a_s = np.ones(B) if tau_s < _E else 1.0 - np.exp(-h / tau_s)
            a_w = np.ones(B) if tau_w < _E else 1.0 - np.exp(-h / tau_w)
            s_tw = s_tw + (gain_s * bins[:, i, 2 * j_lat] - s_tw) * a_s
            w_tw = w_tw + (gain_w * bins[:, i, 2 * j_lat + 1] - w_tw) * a_w
        if kind_id == 4:
            rx = hx + s_tw * np.cos(hth) * h
            ry = hy + s_tw * np.sin(hth) * h
            rth = hth + w_tw * h
        elif kind_id == 3:
            fx = hx + s_tw * np.cos(hth) * h
            fy = hy + s_tw * np.sin(hth) * h
            fth = hth + w_tw * h
            X[:, D - 3] = fx
            X[:, D - 2] = fy
            X[:, D - 1] = fth
            out = _net_apply_numpy((X - mean) * inv_std, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
            rx = fx + out[:, 0]
            ry = fy + out[:, 1]
            rth = fth + out[:, 2]
        elif kind_id == 2:
            out = _net_apply_numpy((X - mean) * inv_std, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
            s_tw = s_tw + out[:, 0]
            w_tw = w_tw + out[:, 1]
            rx = hx + s_tw * np.cos(hth) * h
            ry = hy + s_tw * np.sin(hth) * h
            rth = hth + w_tw * h
        else:
            out = _net_apply_numpy((X - mean) * inv_std, W1, b1, W2, b2, W3, b3, W4, b4, n_layers)
            rx = out[:, 0]
            ry = out[:, 1]
            rth = out[:, 2]
        if mode_id == 0:
            c = np.cos(oth)
            sn = np.sin(oth)
            gx = ox + c * rx - sn * ry
            gy = oy + sn * rx + c * ry
            gth = oth + rth
            ox, oy, oth = gx, gy, gth
        elif mode_id == 1:
            gx = ox + rx
            gy = oy + ry
            gth = rth
            ox, oy = gx.copy(), gy.copy()
        else:
            gx, gy, gth = rx, ry, rth
        preds[:, i, 0] = gx
        preds[:, i, 1] = gy
        preds[:, i, 2] = gth
        px, py, pth = gx.copy(), gy.copy(), gth.copy()
    return preds


_net_apply_njit = jit_or_none(_net_apply_loops)
if _net_apply_njit is not None:
    # the compiled rollout resolves its helper through the module global, so
    # rebind the name to the compiled dispatcher before compiling the caller
    _net_apply_loops = _net_apply_njit
rollout_njit = jit_or_none(_rollout_loops)

rollout_kernel = select(rollout_njit, _rollout_numpy)

BENCH_PAIRS = {
    "rollout": (rollout_njit, _rollout_numpy),
}
