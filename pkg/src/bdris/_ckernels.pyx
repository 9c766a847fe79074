# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Must stay numerically in step with ``_pykernels``."""

import numpy as np

cdef double TINY = 1e-300


def tridiag_bilinear(double complex[::1] d, double complex[::1] e,
                     double complex[::1] hr, double complex[::1] ht):
    """Bilinear form ``hr . M^-1 . ht`` of a complex symmetric tridiagonal M.

    ``d`` is the diagonal, ``e`` the off-diagonal. Returns ``(q, gd, go)``
    with ``u = M^-1 hr``, ``v = M^-1 ht``, ``gd = u * v`` and
    ``go[i] = u[i] v[i+1] + u[i+1] v[i]``. No pivoting: M is assumed to
    have a positive definite Hermitian part.
    """
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i
    cdef double complex denom, q = 0
    if e.shape[0] != n - 1 or hr.shape[0] != n or ht.shape[0] != n:
        raise ValueError("inconsistent tridiagonal operand sizes")
    cp_arr = np.empty(n, dtype=np.complex128)
    u_arr = np.empty(n, dtype=np.complex128)
    v_arr = np.empty(n, dtype=np.complex128)
    gd_arr = np.empty(n, dtype=np.complex128)
    go_arr = np.empty(max(n - 1, 0), dtype=np.complex128)
    cdef double complex[::1] cp = cp_arr
    cdef double complex[::1] u = u_arr
    cdef double complex[::1] v = v_arr
    cdef double complex[::1] gd = gd_arr
    cdef double complex[::1] go = go_arr

    with nogil:
        denom = d[0]
        if denom.real * denom.real + denom.imag * denom.imag < TINY:
            with gil:
                raise ZeroDivisionError("zero pivot at row 0")
        u[0] = hr[0] / denom
        v[0] = ht[0] / denom
        if n > 1:
            cp[0] = e[0] / denom
        for i in range(1, n):
            denom = d[i] - e[i - 1] * cp[i - 1]
            if denom.real * denom.real + denom.imag * denom.imag < TINY:
                with gil:
                    raise ZeroDivisionError(f"zero pivot at row {i}")
            if i < n - 1:
                cp[i] = e[i] / denom
            u[i] = (hr[i] - e[i - 1] * u[i - 1]) / denom
            v[i] = (ht[i] - e[i - 1] * v[i - 1]) / denom
        for i in range(n - 2, -1, -1):
            u[i] = u[i] - cp[i] * u[i + 1]
            v[i] = v[i] - cp[i] * v[i + 1]
        for i in range(n):
            q = q + hr[i] * v[i]
            gd[i] = u[i] * v[i]
        for i in range(n - 1):
            go[i] = u[i] * v[i + 1] + u[i + 1] * v[i]
    return q, gd_arr, go_arr
