# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend for the dense Gaussian pairwise accumulation.

Same contract as bcrf._pairwise_np.gauss_accumulate, without the (tile x N)
scratch matrix: distances, the Gaussian, and the weighted accumulation are
fused into one pass over ordered pixel pairs.
"""

from libc.math cimport exp

BACKEND = "compiled"


def gauss_accumulate(double[:, ::1] out,
                     const double[:, ::1] values,
                     const double[:, ::1] scaled,
                     double weight):
    """out[i] += weight * sum_j exp(-0.5 * ||scaled_i - scaled_j||^2) * values[j].

    The sum includes the self term j == i (the caller subtracts it).
    `scaled` holds features already divided by their bandwidths.
    """
    cdef Py_ssize_t n = scaled.shape[0]
    cdef Py_ssize_t d = scaled.shape[1]
    cdef Py_ssize_t c = values.shape[1]
    cdef Py_ssize_t i, j, k, m
    cdef double dist, diff, s
    with nogil:
        for i in range(n):
            for j in range(n):
                dist = 0.0
                for k in range(d):
                    diff = scaled[i, k] - scaled[j, k]
                    dist += diff * diff
                s = weight * exp(-0.5 * dist)
                for m in range(c):
                    out[i, m] += s * values[j, m]
