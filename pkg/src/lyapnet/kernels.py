"""Hot loops: network value, x-gradient, pointwise loss and its parameter
gradient, and the Adam update.

Each kernel exists twice: an explicit-loop version compiled with numba
(``*_loops``) and a vectorized numpy version (``*_numpy``). The public names
at the bottom of the module point at one or the other depending on
``LYAPNET_DISABLE_NUMBA``.

Parameters travel as one flat float64 vector ``theta`` laid out as

    w1 (K x n) | b1 (K) | w2 (n_sub x M x d) | b2 (n_sub x M) | a (n_sub x M) | c

with ``K = n_sub * d`` and all blocks row-major. Loss kinds are encoded as
``PDE = 0`` and ``PDI = 1``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

PDE = 0
PDI = 1


@njit(cache=True)
def offsets(n, n_sub, d, m):
    k = n_sub * d
    o_b1 = k * n
    o_w2 = o_b1 + k
    o_b2 = o_w2 + n_sub * m * d
    o_a = o_b2 + n_sub * m
    o_c = o_a + n_sub * m
    return o_b1, o_w2, o_b2, o_a, o_c, o_c + 1


def unpack(theta, n, n_sub, d, m):
    """Views into ``theta``: ``(w1, b1, w2, b2, a, c)``."""
    o_b1, o_w2, o_b2, o_a, o_c, _ = offsets(n, n_sub, d, m)
    k = n_sub * d
    return (
        theta[:o_b1].reshape(k, n),
        theta[o_b1:o_w2],
        theta[o_w2:o_b2].reshape(n_sub, m, d),
        theta[o_b2:o_a].reshape(n_sub, m),
        theta[o_a:o_c].reshape(n_sub, m),
        theta[o_c:o_c + 1],
    )


# --------------------------------------------------------------------------
# numba loop kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _first_layer(theta, x, n, k, z):
    o_b1 = k * n
    for r in range(k):
        acc = theta[o_b1 + r]
        for j in range(n):
            acc += theta[r * n + j] * x[j]
        z[r] = acc


@njit(cache=True)
def forward_loops(theta, X, n, n_sub, d, m):
    o_b1, o_w2, o_b2, o_a, o_c, _ = offsets(n, n_sub, d, m)
    k = n_sub * d
    out = np.empty(X.shape[0])
    z = np.empty(k)
    for p in range(X.shape[0]):
        _first_layer(theta, X[p], n, k, z)
        w = theta[o_c]
        for i in range(n_sub):
            for q in range(m):
                u = theta[o_b2 + i * m + q]
                base = o_w2 + (i * m + q) * d
                for j in range(d):
                    u += theta[base + j] * z[i * d + j]
                w += theta[o_a + i * m + q] * (max(u, 0.0) + math.log1p(math.exp(-abs(u))))
        out[p] = w
    return out


@njit(cache=True)
def grad_x_loops(theta, X, n, n_sub, d, m):
    o_b1, o_w2, o_b2, o_a, o_c, _ = offsets(n, n_sub, d, m)
    k = n_sub * d
    out = np.zeros((X.shape[0], n))
    z = np.empty(k)
    g = np.empty(k)
    for p in range(X.shape[0]):
        _first_layer(theta, X[p], n, k, z)
        g[:] = 0.0
        for i in range(n_sub):
            for q in range(m):
                u = theta[o_b2 + i * m + q]
                base = o_w2 + (i * m + q) * d
                for j in range(d):
                    u += theta[base + j] * z[i * d + j]
                e = math.exp(-abs(u))
                s1 = 1.0 / (1.0 + e) if u >= 0.0 else e / (1.0 + e)
                coef = theta[o_a + i * m + q] * s1
                for j in range(d):
                    g[i * d + j] += coef * theta[base + j]
        for r in range(k):
            for j in range(n):
                out[p, j] += g[r] * theta[r * n + j]
    return out


@njit(cache=True)
def _bound_values(xx, c1, c2, power):
    # alpha_i(|x|) = c_i |x|^power, computed from |x|^2 to stay exact for power 2
    if power == 2.0:
        return c1 * xx, c2 * xx
    r = xx ** (0.5 * power)
    return c1 * r, c2 * r


@njit(cache=True)
def _loss_and_sensitivities(w, q, xx, kind, nu, c1, c2, power):
    """Pointwise loss plus dL/dW and dL/d(orbital derivative)."""
    res = q + xx
    if kind == PDI and res < 0.0:
        res = 0.0
    lo, hi = _bound_values(xx, c1, c2, power)
    below = min(w - lo, 0.0)
    above = max(w - hi, 0.0)
    loss = res * res + nu * (below * below + above * above)
    return loss, 2.0 * nu * (below + above), 2.0 * res


@njit(cache=True)
def loss_terms_loops(theta, X, FX, n, n_sub, d, m, kind, nu, c1, c2, power):
    """Per-point loss together with W and the orbital derivative DW.f."""
    o_b1, o_w2, o_b2, o_a, o_c, _ = offsets(n, n_sub, d, m)
    k = n_sub * d
    npts = X.shape[0]
    losses = np.empty(npts)
    ws = np.empty(npts)
    qs = np.empty(npts)
    z = np.empty(k)
    v = np.empty(k)
    for p in range(npts):
        x = X[p]
        fx = FX[p]
        _first_layer(theta, x, n, k, z)
        xx = 0.0
        for j in range(n):
            xx += x[j] * x[j]
        for r in range(k):
            acc = 0.0
            for j in range(n):
                acc += theta[r * n + j] * fx[j]
            v[r] = acc
        w = theta[o_c]
        qd = 0.0
        for i in range(n_sub):
            for q in range(m):
                u = theta[o_b2 + i * m + q]
                s = 0.0
                base = o_w2 + (i * m + q) * d
                for j in range(d):
                    u += theta[base + j] * z[i * d + j]
                    s += theta[base + j] * v[i * d + j]
                e = math.exp(-abs(u))
                s1 = 1.0 / (1.0 + e) if u >= 0.0 else e / (1.0 + e)
                a = theta[o_a + i * m + q]
                w += a * (max(u, 0.0) + math.log1p(e))
                qd += a * s1 * s
        loss, _, _ = _loss_and_sensitivities(w, qd, xx, kind, nu, c1, c2, power)
        losses[p] = loss
        ws[p] = w
        qs[p] = qd
    return losses, ws, qs


@njit(cache=True)
def loss_grad_loops(theta, X, FX, n, n_sub, d, m, kind, nu, c1, c2, power):
    """Mean loss over the batch and its exact gradient with respect to theta.

    The orbital derivative is ``q = sum a * s'(u) * (w2 . v)`` with
    ``v = w1 @ f(x)``, so its parameter derivatives bring in ``s''``.
    """
    o_b1, o_w2, o_b2, o_a, o_c, total = offsets(n, n_sub, d, m)
    k = n_sub * d
    nm = n_sub * m
    npts = X.shape[0]
    grad = np.zeros(total)
    z = np.empty(k)
    v = np.empty(k)
    hv = np.empty(nm)
    s1v = np.empty(nm)
    s2v = np.empty(nm)
    sv = np.empty(nm)
    e_acc = np.empty(k)
    g_acc = np.empty(k)
    inv = 1.0 / npts
    loss_sum = 0.0
    for p in range(npts):
        x = X[p]
        fx = FX[p]
        _first_layer(theta, x, n, k, z)
        xx = 0.0
        for j in range(n):
            xx += x[j] * x[j]
        for r in range(k):
            acc = 0.0
            for j in range(n):
                acc += theta[r * n + j] * fx[j]
            v[r] = acc
        w = theta[o_c]
        qd = 0.0
        for i in range(n_sub):
            for q in range(m):
                idx = i * m + q
                u = theta[o_b2 + idx]
                s = 0.0
                base = o_w2 + idx * d
                for j in range(d):
                    u += theta[base + j] * z[i * d + j]
                    s += theta[base + j] * v[i * d + j]
                e = math.exp(-abs(u))
                s1 = 1.0 / (1.0 + e) if u >= 0.0 else e / (1.0 + e)
                h = max(u, 0.0) + math.log1p(e)
                a = theta[o_a + idx]
                w += a * h
                qd += a * s1 * s
                hv[idx] = h
                s1v[idx] = s1
                s2v[idx] = e / ((1.0 + e) * (1.0 + e))
                sv[idx] = s
        loss, dw, dq = _loss_and_sensitivities(w, qd, xx, kind, nu, c1, c2, power)
        loss_sum += loss
        if dw == 0.0 and dq == 0.0:
            continue
        dw *= inv
        dq *= inv
        grad[o_c] += dw
        e_acc[:] = 0.0
        g_acc[:] = 0.0
        for i in range(n_sub):
            for q in range(m):
                idx = i * m + q
                a = theta[o_a + idx]
                s1 = s1v[idx]
                t = a * (dw * s1 + dq * s2v[idx] * sv[idx])
                grad[o_a + idx] += dw * hv[idx] + dq * s1 * sv[idx]
                grad[o_b2 + idx] += t
                base = o_w2 + idx * d
                dqas1 = dq * a * s1
                for j in range(d):
                    r = i * d + j
                    wt = theta[base + j]
                    grad[base + j] += t * z[r] + dqas1 * v[r]
                    e_acc[r] += t * wt
                    g_acc[r] += a * s1 * wt
        for r in range(k):
            er = e_acc[r]
            gr = dq * g_acc[r]
            grad[o_b1 + r] += er
            for j in range(n):
                grad[r * n + j] += er * x[j] + gr * fx[j]
    return loss_sum * inv, grad


@njit(cache=True)
def adam_loops(theta, grad, m1, m2, t, lr, beta1, beta2, eps):
    """One Adam step in place; ``t`` is the step index after increment."""
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i in range(theta.shape[0]):
        g = grad[i]
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * g
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g
        theta[i] -= lr * (m1[i] / c1) / (math.sqrt(m2[i] / c2) + eps)


# --------------------------------------------------------------------------
# numpy fallback kernels
# --------------------------------------------------------------------------


def _softplus_parts(u):
    e = np.exp(-np.abs(u))
    h = np.maximum(u, 0.0) + np.log1p(e)
    s1 = np.where(u >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    s2 = e / ((1.0 + e) * (1.0 + e))
    return h, s1, s2


def forward_numpy(theta, X, n, n_sub, d, m):
    w1, b1, w2, b2, a, c = unpack(theta, n, n_sub, d, m)
    z = (X @ w1.T + b1).reshape(-1, n_sub, d)
    u = np.einsum("bij,ikj->bik", z, w2) + b2
    h, _, _ = _softplus_parts(u)
    return np.einsum("bik,ik->b", h, a) + c[0]


def grad_x_numpy(theta, X, n, n_sub, d, m):
    w1, b1, w2, b2, a, c = unpack(theta, n, n_sub, d, m)
    z = (X @ w1.T + b1).reshape(-1, n_sub, d)
    u = np.einsum("bij,ikj->bik", z, w2) + b2
    _, s1, _ = _softplus_parts(u)
    g = np.einsum("bik,ikj->bij", a * s1, w2).reshape(X.shape[0], -1)
    return g @ w1


def _numpy_pass(theta, X, FX, n, n_sub, d, m):
    w1, b1, w2, b2, a, c = unpack(theta, n, n_sub, d, m)
    npts = X.shape[0]
    z = (X @ w1.T + b1).reshape(npts, n_sub, d)
    v = (FX @ w1.T).reshape(npts, n_sub, d)
    u = np.einsum("bij,ikj->bik", z, w2) + b2
    s = np.einsum("bij,ikj->bik", v, w2)
    h, s1, s2 = _softplus_parts(u)
    w = np.einsum("bik,ik->b", h, a) + c[0]
    q = np.einsum("bik,ik->b", s1 * s, a)
    return (w1, w2, a), (z, v, s, h, s1, s2), w, q


def _numpy_loss(w, q, X, kind, nu, c1, c2, power):
    xx = np.einsum("bj,bj->b", X, X)
    res = q + xx
    if kind == PDI:
        res = np.maximum(res, 0.0)
    if power == 2.0:
        lo, hi = c1 * xx, c2 * xx
    else:
        r = xx ** (0.5 * power)
        lo, hi = c1 * r, c2 * r
    below = np.minimum(w - lo, 0.0)
    above = np.maximum(w - hi, 0.0)
    loss = res * res + nu * (below * below + above * above)
    return loss, 2.0 * nu * (below + above), 2.0 * res


def loss_terms_numpy(theta, X, FX, n, n_sub, d, m, kind, nu, c1, c2, power):
    _, _, w, q = _numpy_pass(theta, X, FX, n, n_sub, d, m)
    loss, _, _ = _numpy_loss(w, q, X, kind, nu, c1, c2, power)
    return loss, w, q


def loss_grad_numpy(theta, X, FX, n, n_sub, d, m, kind, nu, c1, c2, power):
    (w1, w2, a), (z, v, s, h, s1, s2), w, q = _numpy_pass(theta, X, FX, n, n_sub, d, m)
    loss, dw, dq = _numpy_loss(w, q, X, kind, nu, c1, c2, power)
    npts = X.shape[0]
    dw = dw / npts
    dq = dq / npts
    dw3 = dw[:, None, None]
    dq3 = dq[:, None, None]
    t = a * (dw3 * s1 + dq3 * s2 * s)
    g_a = np.einsum("b,bik->ik", dw, h) + np.einsum("b,bik->ik", dq, s1 * s)
    g_b2 = t.sum(axis=0)
    g_w2 = np.einsum("bik,bij->ikj", t, z) + np.einsum("bik,bij->ikj", dq3 * a * s1, v)
    e = np.einsum("bik,ikj->bij", t, w2).reshape(npts, -1)
    g = np.einsum("bik,ikj->bij", a * s1, w2).reshape(npts, -1)
    g_b1 = e.sum(axis=0)
    g_w1 = e.T @ X + (dq[:, None] * g).T @ FX
    grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2.ravel(), g_a.ravel(), [dw.sum()]])
    return float(loss.mean()), grad


def adam_numpy(theta, grad, m1, m2, t, lr, beta1, beta2, eps):
    m1 *= beta1
    m1 += (1.0 - beta1) * grad
    m2 *= beta2
    m2 += (1.0 - beta2) * grad * grad
    mhat = m1 / (1.0 - beta1 ** t)
    vhat = m2 / (1.0 - beta2 ** t)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)


if USE_NUMBA:
    forward = forward_loops
    grad_x = grad_x_loops
    loss_terms = loss_terms_loops
    loss_grad = loss_grad_loops
    adam = adam_loops
else:
    forward = forward_numpy
    grad_x = grad_x_numpy
    loss_terms = loss_terms_numpy
    loss_grad = loss_grad_numpy
    adam = adam_numpy
