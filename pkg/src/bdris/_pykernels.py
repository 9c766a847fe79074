"""Pure-Python versions of the compiled kernels (same elimination order)."""

import numpy as np


def tridiag_bilinear(d, e, hr, ht):
    """Bilinear form ``hr . M^-1 . ht`` of a complex symmetric tridiagonal M.

    See the compiled twin for the return convention.
    """
    d = [complex(z) for z in d]
    e = [complex(z) for z in e]
    hr = [complex(z) for z in hr]
    ht = [complex(z) for z in ht]
    n = len(d)
    if len(e) != n - 1 or len(hr) != n or len(ht) != n:
        raise ValueError("inconsistent tridiagonal operand sizes")
    cp = [0j] * n
    u = [0j] * n
    v = [0j] * n
    denom = d[0]
    if abs(denom) ** 2 < 1e-300:
        raise ZeroDivisionError("zero pivot at row 0")
    u[0] = hr[0] / denom
    v[0] = ht[0] / denom
    if n > 1:
        cp[0] = e[0] / denom
    for i in range(1, n):
        denom = d[i] - e[i - 1] * cp[i - 1]
        if abs(denom) ** 2 < 1e-300:
            raise ZeroDivisionError(f"zero pivot at row {i}")
        if i < n - 1:
            cp[i] = e[i] / denom
        u[i] = (hr[i] - e[i - 1] * u[i - 1]) / denom
        v[i] = (ht[i] - e[i - 1] * v[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        u[i] = u[i] - cp[i] * u[i + 1]
        v[i] = v[i] - cp[i] * v[i + 1]
    q = 0j
    for i in range(n):
        q += hr[i] * v[i]
    gd = np.array([u[i] * v[i] for i in range(n)], dtype=complex)
    go = np.array([u[i] * v[i + 1] + u[i + 1] * v[i] for i in range(n - 1)], dtype=complex)
    return q, gd, go
