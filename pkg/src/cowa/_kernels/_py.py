"""Pure-numpy fallback implementations of the hot kernels.

Mirrors the compiled core in ``_core.pyx``; keep the two in sync. These
versions lean on BLAS through numpy/scipy, which wins for large matrices,
while the compiled loops win at small batch sizes where call overhead
dominates (see ``benchmarks/bench_kernels.py``).
"""

import numpy as np
from scipy.linalg import solve_triangular

_LOG_2PI = np.log(2.0 * np.pi)


def two_layer_forward(X, W1, b1, W2, b2):
    """Fused forward pass: hidden = relu(X W1^T + b1), logits = hidden W2^T + b2."""
    hidden = X @ W1.T + b1
    np.maximum(hidden, 0.0, out=hidden)
    logits = hidden @ W2.T + b2
    return hidden, logits


def weighted_softmax_ce_grad(X, hidden, probs, soft_labels, weights, W2):
    """Gradients of the weighted soft-label cross entropy.

    Loss: (1/n) * sum_i weights[i] * sum_c -soft_labels[i,c] * log probs[i,c],
    with ``probs`` the softmax of the logits produced by ``two_layer_forward``.
    Returns (g_w1, g_b1, g_w2, g_b2).
    """
    n = X.shape[0]
    scale = weights / n
    # d loss / d logits; exact for any soft_labels (row mass need not be 1)
    row_mass = soft_labels.sum(axis=1)
    delta = (probs * row_mass[:, None] - soft_labels) * scale[:, None]
    g_w2 = delta.T @ hidden
    g_b2 = delta.sum(axis=0)
    back = delta @ W2
    back[hidden <= 0.0] = 0.0
    g_w1 = back.T @ X
    g_b1 = back.sum(axis=0)
    return g_w1, g_b1, g_w2, g_b2


def gaussian_log_density(X, mean, chol_lower):
    """Log N(x | mean, L L^T) per row of X, given the lower Cholesky factor L."""
    h = X.shape[1]
    diff = (X - mean).T
    z = solve_triangular(chol_lower, diff, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", z, z)
    log_det = 2.0 * np.sum(np.log(np.diag(chol_lower)))
    return -0.5 * (h * _LOG_2PI + log_det + quad)


def weighted_scatter(X, resp, mean):
    """Responsibility-weighted scatter sum_i resp[i] (x_i - mean)(x_i - mean)^T."""
    diff = X - mean
    scatter = (diff * resp[:, None]).T @ diff
    # the matmul rounds (a,b) and (b,a) differently; force exact symmetry
    return 0.5 * (scatter + scatter.T)
