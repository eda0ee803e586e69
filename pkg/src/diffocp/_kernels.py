"""Compiled stage loops of the Riccati recursion.

Blocks are tiny (a handful of states), so explicit loops beat per-stage BLAS
calls by a wide margin once compiled.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _chol_solve(L, rhs, out):
    # solve L L' out = rhs, column by column
    m = L.shape[0]
    k = rhs.shape[1]
    for c in range(k):
        for i in range(m):
            acc = rhs[i, c]
            for j in range(i):
                acc -= L[i, j] * out[j, c]
            out[i, c] = acc / L[i, i]
        for i in range(m - 1, -1, -1):
            acc = out[i, c]
            for j in range(i + 1, m):
                acc -= L[j, i] * out[j, c]
            out[i, c] = acc / L[i, i]


@njit(cache=True)
def factorize(Qt, Qt_N, A, B, P, K, L, S, pivot_tol):
    """Backward sweep; returns ``(failed_stage, min_relative_pivot)``."""
    N = Qt.shape[0]
    nx = A.shape[1]
    nu = B.shape[2]
    P[N, :, :] = Qt_N
    min_piv = np.inf
    PA = np.empty((nx, nx))
    PB = np.empty((nx, nu))
    R = np.empty((nu, nu))
    Kn = np.empty((nu, nx))
    for n in range(N - 1, -1, -1):
        Pn1 = P[n + 1]
        An = A[n]
        Bn = B[n]
        Q = Qt[n]
        for i in range(nx):
            for j in range(nx):
                acc = 0.0
                for l in range(nx):
                    acc += Pn1[i, l] * An[l, j]
                PA[i, j] = acc
            for j in range(nu):
                acc = 0.0
                for l in range(nx):
                    acc += Pn1[i, l] * Bn[l, j]
                PB[i, j] = acc
        for i in range(nu):
            for j in range(nu):
                acc = Q[nx + i, nx + j]
                for l in range(nx):
                    acc += Bn[l, i] * PB[l, j]
                R[i, j] = acc
            for j in range(nx):
                acc = Q[nx + i, j]
                for l in range(nx):
                    acc += Bn[l, i] * PA[l, j]
                S[n, i, j] = acc
        # Cholesky of the control block; each pivot is judged against its own
        # diagonal entry so that one huge barrier weight does not mask the rest
        Ln = L[n]
        for i in range(nu):
            for j in range(i + 1):
                acc = R[i, j]
                for l in range(j):
                    acc -= Ln[i, l] * Ln[j, l]
                if i == j:
                    scale = max(abs(R[i, i]), 1e-300)
                    if not acc / scale >= pivot_tol:
                        return n, 0.0
                    piv = acc / scale
                    if piv < min_piv:
                        min_piv = piv
                    Ln[i, i] = np.sqrt(acc)
                else:
                    Ln[i, j] = acc / Ln[j, j]
            for j in range(i + 1, nu):
                Ln[i, j] = 0.0
        _chol_solve(Ln, S[n], Kn)
        for i in range(nu):
            for j in range(nx):
                K[n, i, j] = -Kn[i, j]
        Pn = P[n]
        for i in range(nx):
            for j in range(nx):
                acc = Q[i, j]
                for l in range(nx):
                    acc += An[l, i] * PA[l, j]
                for l in range(nu):
                    acc += S[n, l, i] * K[n, l, j]
                Pn[i, j] = acc
        for i in range(nx):
            for j in range(i):
                v = 0.5 * (Pn[i, j] + Pn[j, i])
                Pn[i, j] = v
                Pn[j, i] = v
    return -1, min_piv


@njit(cache=True)
def solve(P, K, L, A, B, BX, BU, BL, X, U, Lam):
    """Forward/backward substitution for panel right-hand sides."""
    N = A.shape[0]
    nx = A.shape[1]
    nu = B.shape[2]
    k = BX.shape[2]
    p = np.empty((N + 1, nx, k))
    kk = np.empty((N, nu, k))
    t = np.empty((nx, k))
    g = np.empty((nu, k))
    p[N] = BX[N]
    for n in range(N - 1, -1, -1):
        Pn1 = P[n + 1]
        for i in range(nx):
            for c in range(k):
                acc = -p[n + 1, i, c]
                for l in range(nx):
                    acc -= Pn1[i, l] * BL[n + 1, l, c]
                t[i, c] = acc
        for i in range(nu):
            for c in range(k):
                acc = BU[n, i, c]
                for l in range(nx):
                    acc -= B[n, l, i] * t[l, c]
                g[i, c] = acc
        _chol_solve(L[n], g, kk[n])
        for i in range(nx):
            for c in range(k):
                acc = BX[n, i, c]
                for l in range(nx):
                    acc -= A[n, l, i] * t[l, c]
                for l in range(nu):
                    acc += K[n, l, i] * g[l, c]
                p[n, i, c] = acc
    X[0] = BL[0]
    for i in range(nx):
        for c in range(k):
            acc = p[0, i, c]
            for l in range(nx):
                acc -= P[0, i, l] * X[0, l, c]
            Lam[0, i, c] = acc
    for n in range(N):
        for i in range(nu):
            for c in range(k):
                acc = kk[n, i, c]
                for l in range(nx):
                    acc += K[n, i, l] * X[n, l, c]
                U[n, i, c] = acc
        for i in range(nx):
            for c in range(k):
                acc = -BL[n + 1, i, c]
                for l in range(nx):
                    acc += A[n, i, l] * X[n, l, c]
                for l in range(nu):
                    acc += B[n, i, l] * U[n, l, c]
                X[n + 1, i, c] = acc
        Pn1 = P[n + 1]
        for i in range(nx):
            for c in range(k):
                acc = -p[n + 1, i, c]
                for l in range(nx):
                    acc += Pn1[i, l] * X[n + 1, l, c]
                Lam[n + 1, i, c] = acc
