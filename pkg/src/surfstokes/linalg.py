"""Minimal sparse symmetric linear algebra with deterministic accumulation.

Storage is CSR with the full (structurally symmetric) pattern and sorted
column indices.  The constrained solver runs conjugate gradients projected
onto the mean-zero subspace with Jacobi preconditioning; a dense bordered
(KKT) factorization and a dense projected eigensolver serve as oracles for
moderate problem sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE_LIMIT = 2000


class NonConvergenceError(RuntimeError):
    """Projected CG ran out of iterations; carries the residual history tail."""

    def __init__(self, iterations, residual, history_tail):
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.history_tail = list(history_tail)
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class SparseSymmetricMatrix:
    """CSR matrix with symmetric pattern and values, sorted columns per row.

    Explicitly stored zeros are kept; rows are never empty for assembled
    systems (the diagonal always couples).
    """

    def __init__(self, indptr, indices, values):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        if self.indptr[-1] != len(self.indices) or len(self.indices) != len(self.values):
            raise ValueError("inconsistent CSR arrays")

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if x.shape != (self.n,):
            raise ValueError(f"dimension mismatch: matrix {self.n}, vector {x.shape}")
        products = self.values * x[self.indices]
        # per-row sums in storage order (deterministic); rows are non-empty
        row_len = np.diff(self.indptr)
        if np.any(row_len == 0):
            rows = np.repeat(np.arange(self.n), row_len)
            return np.bincount(rows, weights=products, minlength=self.n)
        return np.add.reduceat(products, self.indptr[:-1])

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.n)
        for i in range(self.n):
            row = self.indices[self.indptr[i] : self.indptr[i + 1]]
            k = np.searchsorted(row, i)
            if k < len(row) and row[k] == i:
                diag[i] = self.values[self.indptr[i] + k]
        return diag

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            sl = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[sl]] = self.values[sl]
        return out

    def max_asymmetry(self) -> float:
        dense = self.to_dense()
        return float(np.max(np.abs(dense - dense.T)))

    @staticmethod
    def from_dense(dense: np.ndarray) -> "SparseSymmetricMatrix":
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        indptr = [0]
        indices, values = [], []
        for i in range(n):
            cols = np.nonzero(dense[i])[0]
            if len(cols) == 0:
                cols = np.array([i])
            indices.extend(cols)
            values.extend(dense[i, cols])
            indptr.append(len(indices))
        return SparseSymmetricMatrix(indptr, indices, values)


def matvec(A: SparseSymmetricMatrix, x: np.ndarray) -> np.ndarray:
    return A.matvec(np.asarray(x, dtype=float))


@dataclass
class MeanZeroSolution:
    x: np.ndarray
    iterations: int
    residual: float
    history: np.ndarray


def solve_mean_zero(
    A: SparseSymmetricMatrix,
    c: np.ndarray,
    b: np.ndarray,
    rel_tol: float = 1e-10,
    max_iter: int = 30000,
) -> MeanZeroSolution:
    """Projected, Jacobi-preconditioned CG on the subspace c^T x = 0.

    Solves the constrained Galerkin system (A SPD on the subspace): the
    right-hand side and every iterate/direction are re-projected by
    Pi v = v - (c.v / c.c) c, and convergence is declared when the projected
    residual satisfies |Pi(b - A x)| <= rel_tol |Pi b|.
    """
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    cc = float(c @ c)
    if cc == 0.0:
        raise ValueError("constraint vector must be nonzero")

    def project(v):
        return v - (c @ v) / cc * c

    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("Jacobi preconditioner needs positive diagonal entries")
    inv_diag = 1.0 / diag

    pb = project(b)
    norm_pb = float(np.linalg.norm(pb))
    if norm_pb == 0.0:
        return MeanZeroSolution(np.zeros(A.n), 0, 0.0, np.zeros(0))
    fro = float(np.linalg.norm(A.values))
    eps = np.finfo(float).eps

    def accepted(res, x):
        # tolerance plus the attainable-accuracy floor of the residual
        floor = 64.0 * eps * (fro * float(np.linalg.norm(x)) + norm_pb)
        return res <= rel_tol * norm_pb + floor

    x = np.zeros(A.n)
    r = pb.copy()
    z = project(inv_diag * r)
    p = z.copy()
    gamma = float(r @ z)
    history = [float(np.linalg.norm(r))]
    for it in range(1, max_iter + 1):
        Ap = A.matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NonConvergenceError(it, history[-1] / norm_pb, history[-8:])
        alpha = gamma / pAp
        x += alpha * p
        x = project(x)
        r -= alpha * Ap
        r = project(r)
        res = float(np.linalg.norm(r))
        history.append(res)
        if res <= rel_tol * norm_pb or accepted(res, x):
            # confirm with the explicit residual; on mismatch replace the
            # recurrence residual and restart the search direction
            r_true = project(b - A.matvec(x))
            res_true = float(np.linalg.norm(r_true))
            if accepted(res_true, x):
                return MeanZeroSolution(x, it, res_true / norm_pb, np.array(history))
            r = r_true
            z = project(inv_diag * r)
            gamma = float(r @ z)
            p = z.copy()
            continue
        z = project(inv_diag * r)
        gamma_new = float(r @ z)
        beta = gamma_new / gamma
        gamma = gamma_new
        p = project(z + beta * p)
    raise NonConvergenceError(max_iter, history[-1] / norm_pb, history[-8:])


def solve_dense_kkt(A, c: np.ndarray, b: np.ndarray):
    """Bordered-system oracle: solve [[A, c], [c^T, 0]] [x; lam] = [b; 0]."""
    dense = A.to_dense() if isinstance(A, SparseSymmetricMatrix) else np.asarray(A, float)
    n = dense.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense KKT oracle limited to n <= {DENSE_LIMIT}")
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = dense
    kkt[:n, n] = c
    kkt[n, :n] = c
    sol = np.linalg.solve(kkt, np.concatenate([b, [0.0]]))
    return sol[:n], float(sol[n])


def dense_eigen_min(A, c: np.ndarray) -> float:
    """Smallest eigenvalue of A restricted to the subspace c^T x = 0."""
    dense = A.to_dense() if isinstance(A, SparseSymmetricMatrix) else np.asarray(A, float)
    n = dense.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense eigen oracle limited to n <= {DENSE_LIMIT}")
    c = np.asarray(c, dtype=float).reshape(-1, 1)
    q = np.linalg.qr(c, mode="complete")[0][:, 1:]
    return float(np.linalg.eigvalsh(q.T @ dense @ q).min())
