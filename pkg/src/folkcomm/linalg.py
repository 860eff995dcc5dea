"""Dense matrix primitives used throughout the pipeline.

All matricization is row-major: a ``p x q`` matrix ``A`` stacks to a
vector ``a`` with ``a[(i1)*q + i2] = A[i1, i2]`` (0-based), and every
module in the package relies on this single convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .errors import ContractViolationError, DimensionError

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class MatricizationShape:
    """Target shape for ``mat``: ``rows`` x ``cols`` with ``rows*cols``
    equal to the length of the vectors it reshapes."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(
                f"matricization shape must be positive, got {self.rows}x{self.cols}"
            )

    @property
    def size(self) -> int:
        return self.rows * self.cols


def vec(a: np.ndarray) -> np.ndarray:
    """Stack a matrix into a vector row-major."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"vec expects a matrix, got ndim={a.ndim}")
    return a.reshape(-1)


def mat(v: np.ndarray, shape: MatricizationShape) -> np.ndarray:
    """Inverse of :func:`vec` for the given shape."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError(f"mat expects a vector, got ndim={v.ndim}")
    if v.size != shape.size:
        raise DimensionError(
            f"vector of length {v.size} cannot matricize to {shape.rows}x{shape.cols}"
        )
    return v.reshape(shape.rows, shape.cols)


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with indices flattened row-major, matching vec."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    return np.kron(a, b)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Columnwise Kronecker product: column j is ``a_j (x) b_j``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("khatri_rao expects two matrices")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return np.einsum("ik,jk->ijk", a, b).reshape(a.shape[0] * b.shape[0], a.shape[1])


def ksvd(m, k: int, seed: int = 0):
    """Rank-k truncated SVD.

    Parameters
    ----------
    m : ndarray or scipy sparse matrix
    k : number of leading singular triplets to keep
    seed : seed for the deterministic Lanczos start vector on sparse input

    Returns
    -------
    (u, s, vt) with ``u`` (rows x k), ``s`` (k,) nonincreasing, ``vt``
    (k x cols); ``u @ diag(s) @ vt`` is the best rank-k approximation.
    """
    rows, cols = m.shape
    if k < 1 or k > min(rows, cols):
        raise DimensionError(
            f"k={k} out of range for {rows}x{cols} matrix"
        )
    if sp.issparse(m) and k < min(rows, cols):
        v0 = np.random.default_rng(seed).standard_normal(min(rows, cols))
        u, s, vt = svds(m, k=k, v0=v0)
        order = np.argsort(s)[::-1]
        return u[:, order], s[order], vt[order, :]
    if sp.issparse(m):
        m = m.toarray()
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    return u[:, :k], s[:k], vt[:k, :]


def projector(u: np.ndarray) -> np.ndarray:
    """Orthogonal projector ``u @ u.T`` onto the column span of ``u``.

    Raises ``ContractViolationError`` unless the columns of ``u`` are
    orthonormal within ``ORTHONORMAL_TOL``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise DimensionError("projector expects a matrix of basis columns")
    gram = u.T @ u
    if np.max(np.abs(gram - np.eye(u.shape[1]))) > ORTHONORMAL_TOL:
        raise ContractViolationError("columns are not orthonormal")
    return u @ u.T


def top_two_singvals(m: np.ndarray) -> tuple[float, float]:
    """Two leading singular values, padding sigma2 = 0 for 1-dimensional
    shapes or rank-1 inputs."""
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    s1 = float(s[0]) if s.size else 0.0
    s2 = float(s[1]) if s.size > 1 else 0.0
    return s1, s2


def batched_top_two_singvals(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leading two singular values of a stack of matrices (n, rows, cols)."""
    s = np.linalg.svd(stack, compute_uv=False)
    s1 = s[:, 0]
    s2 = s[:, 1] if s.shape[1] > 1 else np.zeros_like(s1)
    return s1, s2


def pencil_top_two_singvals(basis_mats: np.ndarray, coeffs: np.ndarray,
                            steps: int = 30, seed: int = 0,
                            chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Leading two singular values of ``Z_x = sum_i coeffs[i, x] * basis_mats[i]``
    for every column x, batched.

    All Z_x share the k basis matrices, so one bidiagonalization step for
    every column costs a handful of large matrix products instead of one
    dense SVD per column. Golub-Kahan with full reorthogonalization and a
    fixed, seeded start vector; exact on breakdown (e.g. rank-1 columns),
    otherwise accurate to well below rank-test resolution for the leading
    two values. Deterministic for fixed inputs.
    """
    basis_mats = np.asarray(basis_mats, dtype=float)
    k, rows, cols = basis_mats.shape
    coeffs = np.asarray(coeffs, dtype=float)
    m = coeffs.shape[1]
    steps = int(min(steps, rows, cols))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(cols)
    v0 /= np.linalg.norm(v0)
    s1 = np.empty(m)
    s2 = np.empty(m)
    diag_idx = np.arange(steps)
    for a in range(0, m, chunk):
        b = min(a + chunk, m)
        c = coeffs[:, a:b]
        mc = b - a
        v = np.tile(v0, (mc, 1))
        u_hist = np.zeros((mc, steps, rows))
        v_hist = np.zeros((mc, steps, cols))
        alphas = np.zeros((mc, steps))
        betas = np.zeros((mc, steps))
        u_prev = np.zeros((mc, rows))
        beta_prev = np.zeros(mc)
        v_hist[:, 0] = v
        for j in range(steps):
            zv = np.zeros((mc, rows))
            for i in range(k):
                zv += c[i][:, None] * (v @ basis_mats[i].T)
            u = zv - beta_prev[:, None] * u_prev
            if j:
                proj = np.einsum("msn,mn->ms", u_hist[:, :j], u)
                u -= np.einsum("ms,msn->mn", proj, u_hist[:, :j])
            alpha = np.linalg.norm(u, axis=1)
            nz = alpha > 1e-300
            u[nz] /= alpha[nz, None]
            u[~nz] = 0.0
            alpha[~nz] = 0.0
            u_hist[:, j] = u
            alphas[:, j] = alpha
            ztu = np.zeros((mc, cols))
            for i in range(k):
                ztu += c[i][:, None] * (u @ basis_mats[i])
            vnew = ztu - alpha[:, None] * v
            proj = np.einsum("msn,mn->ms", v_hist[:, :j + 1], vnew)
            vnew -= np.einsum("ms,msn->mn", proj, v_hist[:, :j + 1])
            beta = np.linalg.norm(vnew, axis=1)
            nz = beta > 1e-300
            vnew[nz] /= beta[nz, None]
            vnew[~nz] = 0.0
            beta[~nz] = 0.0
            if j + 1 < steps:
                v_hist[:, j + 1] = vnew
            betas[:, j] = beta
            u_prev, beta_prev, v = u, beta, vnew
        bidiag = np.zeros((mc, steps, steps))
        bidiag[:, diag_idx, diag_idx] = alphas
        if steps > 1:
            bidiag[:, diag_idx[:-1], diag_idx[:-1] + 1] = betas[:, :-1]
        svals = np.linalg.svd(bidiag, compute_uv=False)
        s1[a:b] = svals[:, 0]
        s2[a:b] = svals[:, 1] if steps > 1 else 0.0
    return s1, s2


def product_ksvd(x: np.ndarray, y: np.ndarray, k: int):
    """Rank-k SVD of ``x.T @ y`` without forming the product.

    ``x`` is (r x m) and ``y`` is (r x n) with small r; the SVD is exact
    (computed through thin SVDs of the factors), then truncated to k.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("factor row counts differ")
    ux, sx, vxt = np.linalg.svd(x, full_matrices=False)
    uy, sy, vyt = np.linalg.svd(y, full_matrices=False)
    core = (sx[:, None] * (ux.T @ uy)) * sy[None, :]
    uc, sc, vct = np.linalg.svd(core, full_matrices=False)
    k = min(k, sc.size)
    u = vxt.T @ uc[:, :k]
    v = vyt.T @ vct[:k, :].T
    return u, sc[:k], v.T


def sym_product_eigh(b: np.ndarray, e: np.ndarray, k: int):
    """Top-k eigenpairs of the symmetric congruence ``b @ sym(e) @ b.T``.

    ``b`` is (n x r) with small r; ``e`` (r x r) is symmetrized before the
    decomposition. Returns (eigvals descending, eigvecs as columns).
    """
    b = np.asarray(b, dtype=float)
    e = np.asarray(e, dtype=float)
    q, r = np.linalg.qr(b)
    mid = r @ ((e + e.T) / 2.0) @ r.T
    mid = (mid + mid.T) / 2.0
    vals, vecs = np.linalg.eigh(mid)
    order = np.argsort(vals)[::-1][:k]
    return vals[order], q @ vecs[:, order]
