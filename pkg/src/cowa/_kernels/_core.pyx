# Compiled hot kernels. Keep in sync with the fallback in _py.py:
# same signatures, same math, float64 C-contiguous arrays throughout.

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

cdef double _LOG_2PI = 1.8378770664093453


def two_layer_forward(const double[:, ::1] X, const double[:, ::1] W1,
                      const double[::1] b1, const double[:, ::1] W2,
                      const double[::1] b2):
    """Fused forward pass: hidden = relu(X W1^T + b1), logits = hidden W2^T + b2."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t h = W1.shape[0], k = W2.shape[0]
    hidden_arr = np.empty((n, h), dtype=np.float64)
    logits_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] hidden = hidden_arr
    cdef double[:, ::1] logits = logits_arr
    cdef Py_ssize_t i, j, c, a
    cdef double acc
    for i in range(n):
        for j in range(h):
            acc = b1[j]
            for a in range(d):
                acc += X[i, a] * W1[j, a]
            hidden[i, j] = acc if acc > 0.0 else 0.0
        for c in range(k):
            acc = b2[c]
            for j in range(h):
                acc += hidden[i, j] * W2[c, j]
            logits[i, c] = acc
    return hidden_arr, logits_arr


def weighted_softmax_ce_grad(const double[:, ::1] X, const double[:, ::1] hidden,
                             const double[:, ::1] probs,
                             const double[:, ::1] soft_labels,
                             const double[::1] weights,
                             const double[:, ::1] W2):
    """Gradients of the weighted soft-label cross entropy.

    Loss: (1/n) * sum_i weights[i] * sum_c -soft_labels[i,c] * log probs[i,c].
    Returns (g_w1, g_b1, g_w2, g_b2).
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t h = hidden.shape[1], k = probs.shape[1]
    g_w1_arr = np.zeros((h, d), dtype=np.float64)
    g_b1_arr = np.zeros(h, dtype=np.float64)
    g_w2_arr = np.zeros((k, h), dtype=np.float64)
    g_b2_arr = np.zeros(k, dtype=np.float64)
    delta_arr = np.empty(k, dtype=np.float64)
    back_arr = np.empty(h, dtype=np.float64)
    cdef double[:, ::1] g_w1 = g_w1_arr
    cdef double[::1] g_b1 = g_b1_arr
    cdef double[:, ::1] g_w2 = g_w2_arr
    cdef double[::1] g_b2 = g_b2_arr
    cdef double[::1] delta = delta_arr
    cdef double[::1] back = back_arr
    cdef Py_ssize_t i, j, c, a
    cdef double scale, row_mass, acc, inv_n = 1.0 / n
    for i in range(n):
        scale = weights[i] * inv_n
        row_mass = 0.0
        for c in range(k):
            row_mass += soft_labels[i, c]
        for c in range(k):
            delta[c] = (probs[i, c] * row_mass - soft_labels[i, c]) * scale
            g_b2[c] += delta[c]
            for j in range(h):
                g_w2[c, j] += delta[c] * hidden[i, j]
        for j in range(h):
            if hidden[i, j] > 0.0:
                acc = 0.0
                for c in range(k):
                    acc += delta[c] * W2[c, j]
                back[j] = acc
            else:
                back[j] = 0.0
        for j in range(h):
            if back[j] != 0.0:
                g_b1[j] += back[j]
                for a in range(d):
                    g_w1[j, a] += back[j] * X[i, a]
    return g_w1_arr, g_b1_arr, g_w2_arr, g_b2_arr


def gaussian_log_density(const double[:, ::1] X, const double[::1] mean,
                         const double[:, ::1] chol_lower):
    """Log N(x | mean, L L^T) per row of X, given the lower Cholesky factor L."""
    cdef Py_ssize_t n = X.shape[0], h = X.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(h, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t i, a, b
    cdef double acc, quad, log_det = 0.0
    for a in range(h):
        log_det += log(chol_lower[a, a])
    log_det *= 2.0
    cdef double const = h * _LOG_2PI + log_det
    for i in range(n):
        quad = 0.0
        for a in range(h):
            acc = X[i, a] - mean[a]
            for b in range(a):
                acc -= chol_lower[a, b] * z[b]
            z[a] = acc / chol_lower[a, a]
            quad += z[a] * z[a]
        out[i] = -0.5 * (const + quad)
    return out_arr


def weighted_scatter(const double[:, ::1] X, const double[::1] resp,
                     const double[::1] mean):
    """Responsibility-weighted scatter sum_i resp[i] (x_i - mean)(x_i - mean)^T."""
    cdef Py_ssize_t n = X.shape[0], h = X.shape[1]
    out_arr = np.zeros((h, h), dtype=np.float64)
    diff_arr = np.empty(h, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] diff = diff_arr
    cdef Py_ssize_t i, a, b
    cdef double r
    for i in range(n):
        r = resp[i]
        for a in range(h):
            diff[a] = X[i, a] - mean[a]
        for a in range(h):
            for b in range(a + 1):
                out[a, b] += r * diff[a] * diff[b]
    for a in range(h):
        for b in range(a):
            out[b, a] = out[a, b]
    return out_arr
