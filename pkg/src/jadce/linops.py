"""Structured real-valued operators for the Kronecker measurement model.

The measurement matrix has the form ``Phi = embed(B kron U)`` where ``embed``
maps a complex matrix ``C`` to the real block matrix ``[[Re C, -Im C],
[Im C, Re C]]`` and vectors are stacked as ``[Re v; Im v]``. Keeping the two
Kronecker factors instead of the dense ``2MT x 2MN`` matrix makes products and
Gram matrices cheap at the problem sizes used in the sweeps.
"""

from __future__ import annotations

import numpy as np


def real_embed(C: np.ndarray) -> np.ndarray:
    """Real block embedding ``[[Re C, -Im C], [Im C, Re C]]`` of a complex matrix."""
    C = np.asarray(C)
    return np.block([[C.real, -C.imag], [C.imag, C.real]])


def to_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag])


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = x.shape[0] // 2
    return x[:half] + 1j * x[half:]


def vec(X: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape((rows, cols), order="F")


class KronMeasurement:
    """Real embedding of ``B kron U``.

    Parameters
    ----------
    B : ndarray, shape (T, N)
        Left factor, here ``(G^{1/2} D)^T``.
    U : ndarray, shape (M, Mt)
        Right factor, the array-response matrix.
    """

    def __init__(self, B: np.ndarray, U: np.ndarray):
        self.B = np.asarray(B, dtype=complex)
        self.U = np.asarray(U, dtype=complex)
        T, N = self.B.shape
        M, Mt = self.U.shape
        self.shape = (2 * M * T, 2 * Mt * N)

    @property
    def dims(self):
        T, N = self.B.shape
        M, Mt = self.U.shape
        return M, Mt, N, T

    def matvec(self, x: np.ndarray) -> np.ndarray:
        M, Mt, N, T = self.dims
        X = unvec(to_complex(x), Mt, N)
        return to_real(vec(self.U @ X @ self.B.T))

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        M, Mt, N, T = self.dims
        Y = unvec(to_complex(y), M, T)
        return to_real(vec(self.U.conj().T @ Y @ self.B.conj()))

    def __matmul__(self, x):
        return self.matvec(x)

    def toarray(self) -> np.ndarray:
        return real_embed(np.kron(self.B, self.U))

    def row_sq_norms(self) -> np.ndarray:
        """Squared Euclidean norm of every real row."""
        bt = (np.abs(self.B) ** 2).sum(axis=1)
        um = (np.abs(self.U) ** 2).sum(axis=1)
        rows = np.kron(bt, um)
        return np.concatenate([rows, rows])

    def gram_diagonal(self, w: np.ndarray) -> np.ndarray:
        """Diagonal of ``Phi^T diag(w) Phi`` without forming it."""
        w = np.asarray(w, dtype=float)
        M, Mt, N, T = self.dims
        half = w.shape[0] // 2
        B2, U2 = np.abs(self.B) ** 2, np.abs(self.U) ** 2
        Br, Bi = self.B.real, self.B.imag
        Ur, Ui = self.U.real, self.U.imag
        if np.array_equal(w[:half], w[half:]):
            d = np.einsum("tn,mt,mi->ni", B2, unvec(w[:half], M, T), U2).reshape(-1)
            return np.concatenate([d, d])
        Wr, Wi = unvec(w[:half], M, T), unvec(w[half:], M, T)
        # Re and Im parts of B_tn U_mi, squared, weighted by the matching row halves
        re2 = (np.einsum("tn,mi->tnmi", Br, Ur) - np.einsum("tn,mi->tnmi", Bi, Ui)) ** 2
        im2 = (np.einsum("tn,mi->tnmi", Br, Ui) + np.einsum("tn,mi->tnmi", Bi, Ur)) ** 2
        d_re = np.einsum("tnmi,mt->ni", re2, Wr) + np.einsum("tnmi,mt->ni", im2, Wi)
        d_im = np.einsum("tnmi,mt->ni", im2, Wr) + np.einsum("tnmi,mt->ni", re2, Wi)
        return np.concatenate([d_re.reshape(-1), d_im.reshape(-1)])

    def weighted_gram(self, w: np.ndarray):
        """``Phi^T diag(w) Phi`` as a structured or dense operator."""
        w = np.asarray(w, dtype=float)
        half = w.shape[0] // 2
        w_re, w_im = w[:half], w[half:]
        if not np.array_equal(w_re, w_im):
            Phi = self.toarray()
            return Phi.T @ (w[:, None] * Phi)
        if np.ptp(w_re) <= 1e-13 * np.max(np.abs(w_re)):
            P = self.B.conj().T @ self.B
            C = self.U.conj().T @ self.U
            return KronGram(P, C, float(w_re.mean()))
        M, Mt, N, T = self.dims
        Wt = unvec(w_re, M, T)
        # C_t = U^H diag(w_t) U for every pilot slot t
        Ct = np.einsum("mi,mt,mj->tij", self.U.conj(), Wt, self.U)
        Pt = np.einsum("tn,tk->tnk", self.B.conj(), self.B)
        G = np.einsum("tnk,tij->nikj", Pt, Ct).reshape(N * Mt, N * Mt)
        return real_embed(G)


class KronGram:
    """Real embedding of ``scale * (P kron C)`` with Hermitian PSD factors."""

    def __init__(self, P: np.ndarray, C: np.ndarray, scale: float = 1.0):
        self.P = np.asarray(P, dtype=complex)
        self.C = np.asarray(C, dtype=complex)
        self.scale = float(scale)
        n = 2 * self.P.shape[0] * self.C.shape[0]
        self.shape = (n, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        N, Mt = self.P.shape[0], self.C.shape[0]
        X = unvec(to_complex(x), Mt, N)
        return self.scale * to_real(vec(self.C @ X @ self.P.T))

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self) -> np.ndarray:
        d = self.scale * np.kron(self.P.diagonal().real, self.C.diagonal().real)
        return np.concatenate([d, d])

    def abs_row_sum_bound(self) -> float:
        rp = np.abs(self.P).sum(axis=1).max()
        rc = np.abs(self.C).sum(axis=1).max()
        return float(np.sqrt(2.0) * abs(self.scale) * rp * rc)

    def toarray(self) -> np.ndarray:
        return real_embed(self.scale * np.kron(self.P, self.C))


class DiagonalGram:
    """Diagonal approximation of a Gram matrix."""

    def __init__(self, d: np.ndarray):
        self.d = np.asarray(d, dtype=float)
        self.shape = (self.d.shape[0], self.d.shape[0])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.d * x

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self) -> np.ndarray:
        return self.d.copy()

    def abs_row_sum_bound(self) -> float:
        return float(np.abs(self.d).max())

    def toarray(self) -> np.ndarray:
        return np.diag(self.d)


class SymmetricScaled:
    """``diag(s) Op diag(s)`` for a symmetric operator ``Op``."""

    def __init__(self, op, s: np.ndarray):
        self.op = op
        self.s = np.asarray(s, dtype=float)
        self.shape = op.shape

    def __matmul__(self, x):
        return self.s * (self.op @ (self.s * x))


def as_dense(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    return op.toarray()


def abs_row_sum_bound(op) -> float:
    """Gershgorin-type upper bound on the spectral radius."""
    if isinstance(op, np.ndarray):
        return float(np.abs(op).sum(axis=1).max())
    return op.abs_row_sum_bound()


def matvec(op, x: np.ndarray) -> np.ndarray:
    return op @ x


def rmatvec(op, y: np.ndarray) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op.T @ y
    return op.rmatvec(y)


def row_sq_norms(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return (op**2).sum(axis=1)
    return op.row_sq_norms()


def gram_diagonal(op, w: np.ndarray) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return np.einsum("ij,i,ij->j", op, np.asarray(w), op)
    return op.gram_diagonal(w)


def weighted_gram(op, w: np.ndarray):
    if isinstance(op, np.ndarray):
        return op.T @ (np.asarray(w)[:, None] * op)
    return op.weighted_gram(w)


def power_iteration(op, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0):
    """Largest eigenvalue of a symmetric PSD operator.

    Returns
    -------
    (value, n_iter, converged)
    """
    n = op.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for it in range(1, max_iter + 1):
        w = op @ v
        rho_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, it, True
        v = w / nrm
        if abs(rho_new - rho) <= tol * abs(rho_new):
            return rho_new, it, True
        rho = rho_new
    return rho, max_iter, False
