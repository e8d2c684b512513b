# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled categorical log-likelihood kernels.

Every block of the model (the true-state process and the stacked rows of
the classification process) is a set of softmax rows ``eta[i, :]`` with an
observed label ``labels[i]``.  The sampler moves one linear-predictor
column at a time, so the kernels evaluate a shifted column without
materialising the proposal.
"""

from libc.math cimport exp, log

import numpy as np


cdef inline double _row_loglik(const double[:, ::1] eta, Py_ssize_t i,
                               Py_ssize_t label, Py_ssize_t col, double shift) nogil:
    cdef Py_ssize_t k, K = eta.shape[1]
    cdef double v, m = -1.0e308, acc = 0.0, target
    for k in range(K):
        v = eta[i, k]
        if k == col:
            v += shift
        if v > m:
            m = v
    for k in range(K):
        v = eta[i, k]
        if k == col:
            v += shift
        acc += exp(v - m)
    target = eta[i, label]
    if label == col:
        target += shift
    return target - m - log(acc)


def block_loglik(const double[:, ::1] eta, const Py_ssize_t[::1] labels,
                 double[::1] cache):
    """Fill ``cache`` with per-row log-softmax at the label; return the sum."""
    cdef Py_ssize_t i, n = eta.shape[0]
    cdef double total = 0.0, v
    with nogil:
        for i in range(n):
            v = _row_loglik(eta, i, labels[i], -1, 0.0)
            cache[i] = v
            total += v
    return total


def delta_loglik(const double[:, ::1] eta, const Py_ssize_t[::1] labels,
                 const Py_ssize_t[::1] rows, Py_ssize_t col,
                 const double[::1] direction, double delta,
                 const double[::1] cache, double[::1] out):
    """Log-likelihood change when ``eta[rows, col] += delta * direction[rows]``.

    The proposed per-row values are written to ``out`` (aligned with
    ``rows``) so that :func:`commit` can accept without recomputing.
    """
    cdef Py_ssize_t r, i, n = rows.shape[0]
    cdef double total = 0.0, v
    with nogil:
        for r in range(n):
            i = rows[r]
            v = _row_loglik(eta, i, labels[i], col, delta * direction[i])
            out[r] = v
            total += v - cache[i]
    return total


def commit(double[:, ::1] eta, const Py_ssize_t[::1] rows, Py_ssize_t col,
           const double[::1] direction, double delta,
           double[::1] cache, const double[::1] out):
    """Apply an accepted column shift and store the new row values."""
    cdef Py_ssize_t r, i, n = rows.shape[0]
    with nogil:
        for r in range(n):
            i = rows[r]
            eta[i, col] += delta * direction[i]
            cache[i] = out[r]
