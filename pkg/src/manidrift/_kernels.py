"""Row-wise numeric kernels.

Each kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
version. The numba path is used when numba imports and the environment
variable ``MANIDRIFT_NO_NUMBA`` is unset (or ``0``). Both paths reduce in
a fixed order, so results are deterministic for a given backend; the two
backends agree to round-off.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_disabled = os.environ.get("MANIDRIFT_NO_NUMBA", "").strip() not in ("", "0")
USE_NUMBA = HAVE_NUMBA and not _disabled


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------


def _np_normalize_rows(X):
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    safe = np.where(norms > 0.0, norms, 1.0)
    return X / safe[:, None], norms


def _np_fuse_rows(A, B):
    S = A + B
    sq = np.einsum("ij,ij->i", S, S)
    safe = np.where(sq > 0.0, np.sqrt(sq), 1.0)
    return S / safe[:, None], sq


def _np_pair_gaps(A, B, F):
    dBA = B - A
    dFA = F - A
    return 0.5 * np.einsum("ij,ij->i", dBA, dBA) - np.einsum("ij,ij->i", dFA, dFA)


def _np_residual_energy(X, mu, V):
    Xc = X - mu
    R = Xc - (Xc @ V) @ V.T
    return np.einsum("ij,ij->i", R, R), np.einsum("ij,ij->i", Xc, Xc)


def _np_normalize_backward(G, Y, norms):
    dots = np.einsum("ij,ij->i", G, Y)
    return (G - dots[:, None] * Y) / norms[:, None]


def _np_softmax_xent(L, labels):
    m = L.max(axis=1)
    E = np.exp(L - m[:, None])
    s = E.sum(axis=1)
    P = E / s[:, None]
    rows = np.arange(L.shape[0])
    loss = np.log(s) + m - L[rows, labels]
    return loss, P


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_normalize_rows(X):
        n, d = X.shape
        Y = np.empty_like(X)
        norms = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += X[i, j] * X[i, j]
            nrm = np.sqrt(acc)
            norms[i] = nrm
            inv = 1.0 / nrm if nrm > 0.0 else 1.0
            for j in range(d):
                Y[i, j] = X[i, j] * inv
        return Y, norms

    @numba.njit(cache=True)
    def _nb_fuse_rows(A, B):
        n, d = A.shape
        F = np.empty_like(A)
        sq = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                s = A[i, j] + B[i, j]
                F[i, j] = s
                acc += s * s
            sq[i] = acc
            inv = 1.0 / np.sqrt(acc) if acc > 0.0 else 1.0
            for j in range(d):
                F[i, j] *= inv
        return F, sq

    @numba.njit(cache=True)
    def _nb_pair_gaps(A, B, F):
        n, d = A.shape
        out = np.empty(n)
        for i in range(n):
            ba = 0.0
            fa = 0.0
            for j in range(d):
                t = B[i, j] - A[i, j]
                ba += t * t
                u = F[i, j] - A[i, j]
                fa += u * u
            out[i] = 0.5 * ba - fa
        return out

    @numba.njit(cache=True)
    def _nb_residual_energy(X, mu, V):
        n, d = X.shape
        k = V.shape[1]
        resid = np.empty(n)
        total = np.empty(n)
        xc = np.empty(d)
        coef = np.empty(k)
        for i in range(n):
            tot = 0.0
            for j in range(d):
                xc[j] = X[i, j] - mu[j]
                tot += xc[j] * xc[j]
            for c in range(k):
                acc = 0.0
                for j in range(d):
                    acc += V[j, c] * xc[j]
                coef[c] = acc
            r = 0.0
            for j in range(d):
                p = 0.0
                for c in range(k):
                    p += V[j, c] * coef[c]
                t = xc[j] - p
                r += t * t
            resid[i] = r
            total[i] = tot
        return resid, total

    @numba.njit(cache=True)
    def _nb_normalize_backward(G, Y, norms):
        n, d = G.shape
        out = np.empty_like(G)
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += G[i, j] * Y[i, j]
            inv = 1.0 / norms[i]
            for j in range(d):
                out[i, j] = (G[i, j] - dot * Y[i, j]) * inv
        return out

    @numba.njit(cache=True)
    def _nb_softmax_xent(L, labels):
        n, c = L.shape
        P = np.empty_like(L)
        loss = np.empty(n)
        for i in range(n):
            m = L[i, 0]
            for k in range(1, c):
                if L[i, k] > m:
                    m = L[i, k]
            s = 0.0
            for k in range(c):
                e = np.exp(L[i, k] - m)
                P[i, k] = e
                s += e
            for k in range(c):
                P[i, k] /= s
            loss[i] = np.log(s) + m - L[i, labels[i]]
        return loss, P


NUMPY_KERNELS = {
    "normalize_rows": _np_normalize_rows,
    "fuse_rows": _np_fuse_rows,
    "pair_gaps": _np_pair_gaps,
    "residual_energy": _np_residual_energy,
    "normalize_backward": _np_normalize_backward,
    "softmax_xent": _np_softmax_xent,
}

if HAVE_NUMBA:
    NUMBA_KERNELS = {
        "normalize_rows": _nb_normalize_rows,
        "fuse_rows": _nb_fuse_rows,
        "pair_gaps": _nb_pair_gaps,
        "residual_energy": _nb_residual_energy,
        "normalize_backward": _nb_normalize_backward,
        "softmax_xent": _nb_softmax_xent,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

BACKEND = "numba" if USE_NUMBA else "numpy"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def normalize_rows(X):
    return _active["normalize_rows"](_c(X))


def fuse_rows(A, B):
    return _active["fuse_rows"](_c(A), _c(B))


def pair_gaps(A, B, F):
    return _active["pair_gaps"](_c(A), _c(B), _c(F))


def residual_energy(X, mu, V):
    return _active["residual_energy"](_c(X), _c(mu), _c(V))


def normalize_backward(G, Y, norms):
    return _active["normalize_backward"](_c(G), _c(Y), _c(norms))


def softmax_xent(L, labels):
    return _active["softmax_xent"](_c(L), np.ascontiguousarray(labels, dtype=np.int64))
