"""Real symmetric tridiagonal eigensolvers.

Two interchangeable backends: ``"lapack"`` (scipy's MRRR driver, used for
production sizes) and ``"ql"``, a self-contained implicit-shift QL iteration
that needs nothing but numpy. The QL kernel is O(N^2) rotations with a
Python-level loop, so it is only practical up to a few hundred rows; it serves
as an independent check on the LAPACK path.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal


class ConvergenceError(RuntimeError):
    pass


def tql_implicit(
    diag: np.ndarray, offdiag: np.ndarray, max_iter: int = 60
) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-shift QL on a real symmetric tridiagonal matrix.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors as
    columns.
    """
    d = np.array(diag, dtype=float)
    n = d.size
    e = np.zeros(n)
    e[: n - 1] = offdiag
    z = np.eye(n)

    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise ConvergenceError(f"QL failed to converge at row {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zi1
                z[:, i] = c * z[:, i] - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0

    order = np.argsort(d)
    return d[order], z[:, order]


def eigh_tridiag(
    diag: np.ndarray, offdiag: np.ndarray, backend: str = "lapack"
) -> tuple[np.ndarray, np.ndarray]:
    if backend == "lapack":
        return eigh_tridiagonal(np.asarray(diag, float), np.asarray(offdiag, float))
    if backend == "ql":
        return tql_implicit(diag, offdiag)
    raise ValueError(f"unknown eigensolver backend {backend!r}")


def realify_hermitian_tridiagonal(
    diag: np.ndarray, offdiag: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal phase gauge that turns a Hermitian tridiagonal matrix real.

    With H[k, k+1] = offdiag[k] = |b_k| e^{i phi_k}, the unitary
    G = diag(g) satisfies G^dagger H G = T where T is real symmetric with
    off-diagonals |b_k|. Returns (diag(T), offdiag(T), g).
    """
    off = np.asarray(offdiag, dtype=complex)
    mag = np.abs(off)
    # exp(i angle) rather than off/|off|: complex division overflows for subnormal entries
    phase = np.where(mag > 0, np.exp(1j * np.angle(off)), 1.0)
    # T[k,k+1] = conj(g_k) H[k,k+1] g_{k+1} = |b_k| requires g_{k+1} = g_k conj(phase_k)
    g = np.ones(off.size + 1, dtype=complex)
    g[1:] = np.cumprod(np.conj(phase))
    return np.asarray(diag, float).real, mag, g


def residual_norm(
    diag: np.ndarray, offdiag: np.ndarray, values: np.ndarray, vectors: np.ndarray
) -> float:
    """max_j ||A v_j - lambda_j v_j|| without forming A."""
    av = diag[:, None] * vectors
    av[:-1] += offdiag[:, None] * vectors[1:]
    av[1:] += offdiag[:, None] * vectors[:-1]
    return float(np.max(np.linalg.norm(av - vectors * values[None, :], axis=0)))
