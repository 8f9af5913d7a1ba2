# Compiled implementations of the hot kernels. See pyk.py for the
# bit-compatibility contract between backends.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def scan_sorted(double[::1] values, int[::1] labels, int n_classes, int min_leaf):
    cdef Py_ssize_t n = values.shape[0]
    if n < 2 * min_leaf or n < 2:
        return -1, -np.inf

    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt_left_arr = np.zeros(n_classes, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt_right_arr = np.zeros(n_classes, dtype=np.int64)
    cdef long long[::1] cnt_left = cnt_left_arr
    cdef long long[::1] cnt_right = cnt_right_arr

    cdef Py_ssize_t i
    cdef int y
    cdef long long ssq_left = 0, ssq_right = 0
    for i in range(n):
        cnt_right[labels[i]] += 1
    for i in range(n_classes):
        ssq_right += cnt_right[i] * cnt_right[i]

    cdef double best_score = -np.inf
    cdef Py_ssize_t best_pos = -1
    cdef double score
    for i in range(1, n):
        y = labels[i - 1]
        ssq_left += 2 * cnt_left[y] + 1
        cnt_left[y] += 1
        ssq_right -= 2 * cnt_right[y] - 1
        cnt_right[y] -= 1
        if values[i] != values[i - 1] and i >= min_leaf and n - i >= min_leaf:
            score = <double>ssq_left / <double>i + <double>ssq_right / <double>(n - i)
            if score > best_score:
                best_score = score
                best_pos = i
    if best_pos < 0:
        return -1, -np.inf
    return int(best_pos), float(best_score)


def apply_tree(int[::1] feature, double[::1] threshold, int[::1] left,
               int[::1] right, double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] out = np.zeros(n, dtype=np.int32)
    cdef int[::1] idx = out
    cdef Py_ssize_t row
    cdef int node
    for row in range(n):
        node = 0
        while feature[node] >= 0:
            if X[row, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        idx[row] = node
    return out


def kde_sum(double[::1] points, double inv_bw, double[::1] queries):
    cdef Py_ssize_t q = queries.shape[0]
    cdef Py_ssize_t p = points.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(q, dtype=np.float64)
    cdef double[::1] acc = out
    cdef Py_ssize_t i, j
    cdef double d, dd, total, query
    for i in range(q):
        query = queries[i]
        total = 0.0
        for j in range(p):
            d = (query - points[j]) * inv_bw
            dd = d * d
            total += exp(-0.5 * dd)
        acc[i] = total
    return out
