"""Sequential recursions used by training: actuator-state chains, offset
composition chains, and the fully-sequential linear-model training pass.

These loops carry state across rollout steps and cannot be expressed as one
dense array pass. Each exists as scalar loops (numba target) and a batched
numpy fallback; semantics are identical, including where truncated
backpropagation cuts the carried adjoint (steps whose index is a positive
multiple of ``trunc``; ``trunc=0`` disables cutting).
"""

from __future__ import annotations

import math

import numpy as np

from .backend import jit_or_none, select


# -- actuator-state chain ----------------------------------------------------
# s_i = s_{i-1} + (tgt_i - s_{i-1}) * alpha_i + corr_i

def _twist_chain_fwd_loops(s0, tgt, alpha, corr):
    B, L = tgt.shape
    out = np.empty((B, L))
    for b in range(B):
        s = s0[b]
        for i in range(L):
            s = s + (tgt[b, i] - s) * alpha[b, i] + corr[b, i]
            out[b, i] = s
    return out


def _twist_chain_fwd_numpy(s0, tgt, alpha, corr):
    B, L = tgt.shape
    out = np.empty((B, L))
    s = s0.copy()
    for i in range(L):
        s = s + (tgt[:, i] - s) * alpha[:, i] + corr[:, i]
        out[:, i] = s
    return out


def _twist_chain_bwd_loops(ds, alpha, trunc):
    B, L = ds.shape
    dcorr = np.empty((B, L))
    for b in range(B):
        carry = 0.0
        for i in range(L - 1, -1, -1):
            total = ds[b, i] + carry
            dcorr[b, i] = total
            if trunc > 0 and i % trunc == 0 and i > 0:
                carry = 0.0
            else:
                carry = total * (1.0 - alpha[b, i])
    return dcorr


def _twist_chain_bwd_numpy(ds, alpha, trunc):
    B, L = ds.shape
    dcorr = np.empty((B, L))
    carry = np.zeros(B)
    for i in range(L - 1, -1, -1):
        total = ds[:, i] + carry
        dcorr[:, i] = total
        if trunc > 0 and i % trunc == 0 and i > 0:
            carry = np.zeros(B)
        else:
            carry = total * (1.0 - alpha[:, i])
    return dcorr


# -- offset composition chain (full rigid frame) -----------------------------
# g_i = compose(off_i, r_i), off_{i+1} = g_i, off_0 = start.

def _offset_chain_fwd_loops(start, r):
    B, L, _ = r.shape
    g = np.empty((B, L, 3))
    for b in range(B):
        ox, oy, oth = start[b, 0], start[b, 1], start[b, 2]
        for i in range(L):
            c = math.cos(oth)
            s = math.sin(oth)
            ox = ox + c * r[b, i, 0] - s * r[b, i, 1]
            oy = oy + s * r[b, i, 0] + c * r[b, i, 1]
            oth = oth + r[b, i, 2]
            g[b, i, 0] = ox
            g[b, i, 1] = oy
            g[b, i, 2] = oth
    return g


def _offset_chain_fwd_numpy(start, r):
    B, L, _ = r.shape
    g = np.empty((B, L, 3))
    ox, oy, oth = start[:, 0].copy(), start[:, 1].copy(), start[:, 2].copy()
    for i in range(L):
        c = np.cos(oth)
        s = np.sin(oth)
        ox = ox + c * r[:, i, 0] - s * r[:, i, 1]
        oy = oy + s * r[:, i, 0] + c * r[:, i, 1]
        oth = oth + r[:, i, 2]
        g[:, i, 0] = ox
        g[:, i, 1] = oy
        g[:, i, 2] = oth
    return g


def _offset_chain_bwd_loops(start, r, g, ag, trunc):
    B, L, _ = r.shape
    dr = np.empty((B, L, 3))
    for b in range(B):
        cx = 0.0
        cy = 0.0
        cth = 0.0
        for i in range(L - 1, -1, -1):
            tx = ag[b, i, 0] + cx
            ty = ag[b, i, 1] + cy
            tth = ag[b, i, 2] + cth
            oth = start[b, 2] if i == 0 else g[b, i - 1, 2]
            c = math.cos(oth)
            s = math.sin(oth)
            dr[b, i, 0] = c * tx + s * ty
            dr[b, i, 1] = -s * tx + c * ty
            dr[b, i, 2] = tth
            if trunc > 0 and i % trunc == 0 and i > 0:
                cx = 0.0
                cy = 0.0
                cth = 0.0
            else:
                cx = tx
                cy = ty
                cth = tth + (-s * r[b, i, 0] - c * r[b, i, 1]) * tx \
                    + (c * r[b, i, 0] - s * r[b, i, 1]) * ty
    return dr


def _offset_chain_bwd_numpy(start, r, g, ag, trunc):
    B, L, _ = r.shape
    dr = np.empty((B, L, 3))
    cx = np.zeros(B)
    cy = np.zeros(B)
    cth = np.zeros(B)
    for i in range(L - 1, -1, -1):
        tx = ag[:, i, 0] + cx
        ty = ag[:, i, 1] + cy
        tth = ag[:, i, 2] + cth
        oth = start[:, 2] if i == 0 else g[:, i - 1, 2]
        c = np.cos(oth)
        s = np.sin(oth)
        dr[:, i, 0] = c * tx + s * ty
        dr[:, i, 1] = -s * tx + c * ty
        dr[:, i, 2] = tth
        if trunc > 0 and i % trunc == 0 and i > 0:
            cx = np.zeros(B)
            cy = np.zeros(B)
            cth = np.zeros(B)
        else:
            cx = tx
            cy = ty
            cth = tth + (-s * r[:, i, 0] - c * r[:, i, 1]) * tx \
                + (c * r[:, i, 0] - s * r[:, i, 1]) * ty
    return dr


# -- sequential linear-model training pass ------------------------------------
# Handles the frame modes whose features feed back on earlier predictions,
# which rules out the dense batched path. Mode ids: 0 ego, 1 translational,
# 2 none. H is fixed at 1 (history occupies the first three feature slots).

def _lr_seq_loops(mode_id, W, bvec, feats, mean, inv_std, start, targets, trunc):
    B, L, D = feats.shape
    dW = np.zeros((3, D))
    db = np.zeros(3)
    preds = np.empty((B, L, 3))
    xn = np.empty((B, L, D))
    rhat = np.empty((B, L, 3))
    # loss = mean over (b, i) of the coordinate-summed squared error
    denom = 1.0 / (B * L)
    loss = 0.0
    for b in range(B):
        ox, oy, oth = start[b, 0], start[b, 1], start[b, 2]
        for i in range(L):
            if mode_id == 1:
                feats[b, i, 0] = 0.0
                feats[b, i, 1] = 0.0
                feats[b, i, 2] = start[b, 2] if i == 0 else rhat[b, i - 1, 2]
            elif mode_id == 2:
                if i == 0:
                    feats[b, i, 0] = start[b, 0]
                    feats[b, i, 1] = start[b, 1]
                    feats[b, i, 2] = start[b, 2]
                else:
                    feats[b, i, 0] = preds[b, i - 1, 0]
                    feats[b, i, 1] = preds[b, i - 1, 1]
                    feats[b, i, 2] = preds[b, i - 1, 2]
            for d in range(D):
                xn[b, i, d] = (feats[b, i, d] - mean[d]) * inv_std[d]
            for o in range(3):
                acc = bvec[o]
                for d in range(D):
                    acc += W[o, d] * xn[b, i, d]
                rhat[b, i, o] = acc
            if mode_id == 0:
                c = math.cos(oth)
                s = math.sin(oth)
                ox = ox + c * rhat[b, i, 0] - s * rhat[b, i, 1]
                oy = oy + s * rhat[b, i, 0] + c * rhat[b, i, 1]
                oth = oth + rhat[b, i, 2]
            elif mode_id == 1:
                ox = ox + rhat[b, i, 0]
                oy = oy + rhat[b, i, 1]
                oth = rhat[b, i, 2]
            else:
                ox = rhat[b, i, 0]
                oy = rhat[b, i, 1]
                oth = rhat[b, i, 2]
            preds[b, i, 0] = ox
            preds[b, i, 1] = oy
            preds[b, i, 2] = oth
            for o in range(3):
                e = preds[b, i, o] - targets[b, i, o]
                loss += e * e * denom
    for b in range(B):
        cx = 0.0
        cy = 0.0
        cth = 0.0
        fb0 = 0.0
        fb1 = 0.0
        fb2 = 0.0
        for i in range(L - 1, -1, -1):
            ax = 2.0 * (preds[b, i, 0] - targets[b, i, 0]) * denom + cx
            ay = 2.0 * (preds[b, i, 1] - targets[b, i, 1]) * denom + cy
            ath = 2.0 * (preds[b, i, 2] - targets[b, i, 2]) * denom + cth
            if mode_id == 0:
                oth = start[b, 2] if i == 0 else preds[b, i - 1, 2]
                c = math.cos(oth)
                s = math.sin(oth)
                drx = c * ax + s * ay
                dry = -s * ax + c * ay
                drth = ath
            else:
                drx = ax + fb0
                dry = ay + fb1
                drth = ath + fb2
            for d in range(D):
                x = xn[b, i, d]
                dW[0, d] += drx * x
                dW[1, d] += dry * x
                dW[2, d] += drth * x
            db[0] += drx
            db[1] += dry
            db[2] += drth
            cut = trunc > 0 and i % trunc == 0 and i > 0
            if mode_id == 0:
                if cut:
                    cx = 0.0
                    cy = 0.0
                    cth = 0.0
                else:
                    oth = start[b, 2] if i == 0 else preds[b, i - 1, 2]
                    c = math.cos(oth)
                    s = math.sin(oth)
                    cx = ax
                    cy = ay
                    cth = ath + (-s * rhat[b, i, 0] - c * rhat[b, i, 1]) * ax \
                        + (c * rhat[b, i, 0] - s * rhat[b, i, 1]) * ay
            elif mode_id == 1:
                if cut:
                    cx = 0.0
                    cy = 0.0
                    fb2 = 0.0
                else:
                    cx = ax
                    cy = ay
                    fb2 = (W[0, 2] * drx + W[1, 2] * dry + W[2, 2] * drth) * inv_std[2]
                cth = 0.0
            else:
                if cut:
                    fb0 = 0.0
                    fb1 = 0.0
                    fb2 = 0.0
                else:
                    fb0 = (W[0, 0] * drx + W[1, 0] * dry + W[2, 0] * drth) * inv_std[0]
                    fb1 = (W[0, 1] * drx + W[1, 1] * dry + W[2, 1] * drth) * inv_std[1]
                    fb2 = (W[0, 2] * drx + W[1, 2] * dry + W[2, 2] * drth) * inv_std[2]
                cx = 0.0
                cy = 0.0
                cth = 0.0
    return loss, dW, db, preds


twist_chain_fwd_njit = jit_or_none(_twist_chain_fwd_loops)
twist_chain_bwd_njit = jit_or_none(_twist_chain_bwd_loops)
offset_chain_fwd_njit = jit_or_none(_offset_chain_fwd_loops)
offset_chain_bwd_njit = jit_or_none(_offset_chain_bwd_loops)
lr_seq_njit = jit_or_none(_lr_seq_loops)

twist_chain_fwd = select(twist_chain_fwd_njit, _twist_chain_fwd_numpy)
twist_chain_bwd = select(twist_chain_bwd_njit, _twist_chain_bwd_numpy)
offset_chain_fwd = select(offset_chain_fwd_njit, _offset_chain_fwd_numpy)
offset_chain_bwd = select(offset_chain_bwd_njit, _offset_chain_bwd_numpy)

BENCH_PAIRS = {
    "twist_chain_fwd": (twist_chain_fwd_njit, _twist_chain_fwd_numpy),
    "twist_chain_bwd": (twist_chain_bwd_njit, _twist_chain_bwd_numpy),
    "offset_chain_fwd": (offset_chain_fwd_njit, _offset_chain_fwd_numpy),
    "offset_chain_bwd": (offset_chain_bwd_njit, _offset_chain_bwd_numpy),
}


def lr_seq(mode_id, W, bvec, feats, mean, inv_std, start, targets, trunc):
    """Loss, gradients and predictions for a sequential linear-model pass.

    ``feats`` is mutated in place (history slots are rewritten per mode);
    callers pass a scratch copy.
    """
    fn = select(lr_seq_njit, _lr_seq_loops)
    return fn(np.int64(mode_id), W, bvec, feats, mean, inv_std, start, targets,
              np.int64(trunc))
