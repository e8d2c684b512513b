"""Pure numpy implementation of the kernels in ``_kernels.pyx``.

Same signatures and in-place semantics; used when the extension is not
built or when ``MISCLASS_SDM_PURE_PYTHON`` is set.
"""

import numpy as np


def _log_softmax_at(eta, labels):
    m = eta.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(eta - m).sum(axis=1))
    return eta[np.arange(eta.shape[0]), labels] - lse


def block_loglik(eta, labels, cache):
    vals = _log_softmax_at(eta, labels)
    cache[:] = vals
    return float(vals.sum())


def delta_loglik(eta, labels, rows, col, direction, delta, cache, out):
    sub = eta[rows].copy()
    sub[:, col] += delta * direction[rows]
    vals = _log_softmax_at(sub, labels[rows])
    out[: len(rows)] = vals
    return float((vals - cache[rows]).sum())


def commit(eta, rows, col, direction, delta, cache, out):
    eta[rows, col] += delta * direction[rows]
    cache[rows] = out[: len(rows)]
