# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: prefix-program evaluation and elastic-net coordinate descent.

Mirrors ``_fallback.py`` operation for operation; keep the two in sync.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    _ADD = 0
    _SUB = 1
    _MUL = 2
    _DIV = 3
    _VAR = 4
    _CONST = 5

ADD, SUB, MUL, DIV, VAR, CONST = _ADD, _SUB, _MUL, _DIV, _VAR, _CONST

cdef double DIV_EPS = 1e-9
cdef double CLAMP = 1e12

BACKEND = "cython"


def eval_program(const int[::1] codes, const double[::1] args,
                 const double[:, :] X, Py_ssize_t stack_size):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t m = codes.shape[0]
    cdef Py_ssize_t r, i, sp
    cdef int code
    cdef double a, b, v
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef double* stack = <double*> malloc((stack_size + 1) * sizeof(double))
    if stack == NULL:
        raise MemoryError()
    try:
        for r in range(n):
            sp = 0
            for i in range(m - 1, -1, -1):
                code = codes[i]
                if code == _VAR:
                    v = X[r, <Py_ssize_t> args[i]]
                elif code == _CONST:
                    v = args[i]
                else:
                    a = stack[sp - 1]
                    b = stack[sp - 2]
                    sp -= 2
                    if code == _ADD:
                        v = a + b
                    elif code == _SUB:
                        v = a - b
                    elif code == _MUL:
                        v = a * b
                    else:
                        if fabs(b) > DIV_EPS:
                            v = a / b
                        else:
                            v = 1.0
                    if v > CLAMP:
                        v = CLAMP
                    elif v < -CLAMP:
                        v = -CLAMP
                stack[sp] = v
                sp += 1
            out_v[r] = stack[0]
    finally:
        free(stack)
    return out


def enet_cd(const double[:, :] G, const double[::1] c, double lambda1,
            double lambda2, double tol, long max_iters, double[::1] b):
    cdef Py_ssize_t p = c.shape[0]
    cdef Py_ssize_t j, k
    cdef long it, n_iter = 0
    cdef double half = 0.5 * lambda1
    cdef double rho, new, delta, max_delta
    for it in range(max_iters):
        max_delta = 0.0
        for j in range(p):
            rho = c[j]
            for k in range(p):
                if k != j:
                    rho -= G[j, k] * b[k]
            if rho > half:
                new = (rho - half) / (G[j, j] + lambda2)
            elif rho < -half:
                new = (rho + half) / (G[j, j] + lambda2)
            else:
                new = 0.0
            delta = fabs(new - b[j])
            if delta > max_delta:
                max_delta = delta
            b[j] = new
        n_iter = it + 1
        if max_delta < tol:
            break
    return n_iter
