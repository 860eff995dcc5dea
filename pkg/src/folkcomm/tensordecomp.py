"""3-star tensor construction, whitening, robust eigendecomposition, and
membership reconstruction.

The 3-star tensor averages, over detected pure resources, the outer product
of each resource's adjacency restricted to three disjoint (user, tag) pair
blocks A, B, C. Cross-block pair matrices are rank-k up to noise; modified
views map the A- and B-blocks into C-space, where the symmetrized second
moment is PSD of rank k and yields a whitening map. The whitened tensor is
orthogonally decomposable and a robust power iteration with guarded
deflation extracts its eigenpairs, from which the community memberships of
every resource follow by one linear map.

All pair-matrix algebra stays in thin factors (number of pure resources x
block size); nothing of size block x block is ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    ContractViolationError,
    DimensionError,
    NoPureNodesError,
    NumericalError,
    RankDeficiencyError,
)
from .linalg import product_ksvd, sym_product_eigh
from .model import ConnectivityPair, HypergraphSample, TensorBlocks

PINV_CUTOFF_REL = 1e-10
DEFAULT_DEFLATE_TOL = 1e-6
DEFAULT_ITERATIONS = 50


def default_trials(k: int) -> int:
    return max(10 * k, 100)


@dataclass(frozen=True)
class ThreeStarTensor:
    """Average of rank-1 outer products, kept factored: row r of each
    block matrix is one pure resource's adjacency over that block."""

    ga: np.ndarray
    gb: np.ndarray
    gc: np.ndarray

    def __post_init__(self):
        if not (self.ga.shape[0] == self.gb.shape[0] == self.gc.shape[0]):
            raise DimensionError("block matrices must share the resource axis")

    @property
    def n_terms(self) -> int:
        return self.ga.shape[0]

    def contract(self, m1: np.ndarray, m2: np.ndarray, m3: np.ndarray) -> np.ndarray:
        """Multilinear contraction T(m1, m2, m3) from the factored form."""
        return np.einsum(
            "ri,rj,rl->ijl", self.ga @ m1, self.gb @ m2, self.gc @ m3
        ) / self.n_terms

    def materialize(self) -> np.ndarray:
        """Dense |A| x |B| x |C| tensor; only for desk-scale blocks."""
        return np.einsum("ra,rb,rc->abc", self.ga, self.gb, self.gc) / self.n_terms


def _block_rows(users: np.ndarray, tags: np.ndarray, n_tags: int) -> np.ndarray:
    return (users[:, None] * n_tags + tags[None, :]).reshape(-1)


def three_star_tensor(g, pure_set: np.ndarray, blocks: TensorBlocks,
                      dims: tuple[int, int, int] | None = None) -> ThreeStarTensor:
    """Build the 3-star tensor of a sample (or exact adjacency matrix) over
    a pure resource set, factored as an average of outer products."""
    pure_set = np.asarray(pure_set, dtype=np.int64)
    if pure_set.size == 0:
        raise NoPureNodesError("empty pure resource set")
    if isinstance(g, HypergraphSample):
        mats = [g.block_matrix(pure_set, *blocks.users_tags(name))
                for name in ("a", "b", "c")]
    else:
        if dims is None:
            raise DimensionError("dims required for raw adjacency input")
        n_tags = dims[1]
        mats = []
        for name in ("a", "b", "c"):
            users, tags = blocks.users_tags(name)
            rows = _block_rows(users, tags, n_tags)
            sub = g[np.ix_(rows, pure_set)]
            if sp.issparse(sub):
                sub = sub.toarray()
            mats.append(np.asarray(sub, dtype=float).T)
    return ThreeStarTensor(ga=mats[0], gb=mats[1], gc=mats[2])


@dataclass(frozen=True)
class WhiteningBundle:
    """Per-mode maps taking the 3-star tensor to an orthogonally
    decomposable k x k x k tensor via T(w_a, w_b @ s_ab, w_c @ s_ac).

    Under this construction the cross-view symmetrization is folded into
    ``w_a`` and ``w_b`` (both map into whitened C-space), so ``s_ab`` and
    ``s_ac`` are identity matrices. ``pair_conditions`` holds the
    sigma1/sigmak ratio of each estimated pair matrix and
    ``whiten_residual`` the deviation of the whitened second moment from
    the identity.
    """

    w_a: np.ndarray
    w_b: np.ndarray
    w_c: np.ndarray
    s_ab: np.ndarray
    s_ac: np.ndarray
    pair_conditions: dict
    whiten_residual: float


def build_whitening(star: ThreeStarTensor, k: int) -> WhiteningBundle:
    """Whitening and symmetrization maps from the cross-block pair matrices.

    Raises ``RankDeficiencyError`` naming the deficient matrix when any
    pair matrix (or the symmetrized second moment) has numerical rank < k.
    """
    ga, gb, gc = star.ga, star.gb, star.gc
    m = star.n_terms

    def pair_svd(x, y, label):
        u, s, vt = product_ksvd(x, y, k)
        if s.size < k or s[k - 1] <= PINV_CUTOFF_REL * max(s[0], 1e-300):
            raise RankDeficiencyError(
                f"pair matrix {label} has numerical rank < k={k}"
            )
        return u, s / m, vt

    u_ab, s_ab_vals, vt_ab = pair_svd(ga, gb, "AB")
    _, s_cb_vals, _ = pair_svd(gc, gb, "CB")
    _, s_ca_vals, _ = pair_svd(gc, ga, "CA")
    v_ab = vt_ab.T

    # Modified views: map A-block (resp. B-block) vectors into C-space by
    # Pairs_CB @ pinv(Pairs_AB) and Pairs_CA @ pinv(Pairs_BA), kept factored
    # through the thin pair SVD.
    ka = ((gb @ v_ab) / (m * s_ab_vals)) @ u_ab.T
    kb = ((ga @ u_ab) / (m * s_ab_vals)) @ vt_ab

    # Symmetrized second moment in C-space: M2 = Gc^T E Gc with a small core.
    e_core = (ka @ ga.T) @ (gb @ kb.T) / m
    vals, vecs = sym_product_eigh(gc.T, e_core, k)
    if vals.size < k or vals[k - 1] <= PINV_CUTOFF_REL * max(vals[0], 1e-300):
        raise RankDeficiencyError(
            f"symmetrized second moment has numerical rank < k={k}"
        )
    w_c = vecs / np.sqrt(vals)[None, :]

    gcw = gc @ w_c
    w_a = ka.T @ gcw
    w_b = kb.T @ gcw
    whitened_m2 = gcw.T @ ((e_core + e_core.T) / 2.0) @ gcw
    residual = float(np.linalg.norm(whitened_m2 - np.eye(k)))
    conditions = {
        "AB": float(s_ab_vals[0] / s_ab_vals[k - 1]),
        "CB": float(s_cb_vals[0] / s_cb_vals[k - 1]),
        "CA": float(s_ca_vals[0] / s_ca_vals[k - 1]),
    }
    return WhiteningBundle(w_a=w_a, w_b=w_b, w_c=w_c,
                           s_ab=np.eye(k), s_ac=np.eye(k),
                           pair_conditions=conditions,
                           whiten_residual=residual)


def whitened_tensor(star: ThreeStarTensor, bundle: WhiteningBundle) -> np.ndarray:
    return star.contract(bundle.w_a, bundle.w_b @ bundle.s_ab,
                         bundle.w_c @ bundle.s_ac)


@dataclass(frozen=True)
class EigenResult:
    """Eigenpairs of the whitened tensor: unit-norm eigenvector columns,
    eigenvalues made positive by sign flips, the Frobenius residual of the
    rank-k reconstruction, and the power-update count per component."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    iterations: tuple[int, ...]


def _deflated_updates(t: np.ndarray, thetas: np.ndarray, lam: np.ndarray,
                      phi_rows: np.ndarray, xi: float) -> np.ndarray:
    """Batched power-iteration numerators against the deflated tensor; the
    deflation of component j is applied only where |lam_j <theta, phi_j>|
    exceeds xi."""
    updates = np.einsum("abc,tb,tc->ta", t, thetas, thetas)
    if lam.size:
        dots = thetas @ phi_rows.T
        active = np.abs(dots * lam[None, :]) > xi
        updates -= ((lam[None, :] * dots ** 2) * active) @ phi_rows
    return updates


def _deflated_values(t: np.ndarray, thetas: np.ndarray, lam: np.ndarray,
                     phi_rows: np.ndarray, xi: float) -> np.ndarray:
    vals = np.einsum("abc,ta,tb,tc->t", t, thetas, thetas, thetas)
    if lam.size:
        dots = thetas @ phi_rows.T
        active = np.abs(dots * lam[None, :]) > xi
        vals -= ((lam[None, :] * dots ** 3) * active).sum(axis=1)
    return vals


def tensor_eigen(t: np.ndarray, inits: np.ndarray,
                 n_iters: int = DEFAULT_ITERATIONS,
                 xi: float = DEFAULT_DEFLATE_TOL) -> EigenResult:
    """Robust tensor power method with deflation.

    For each of the k components, every initialization runs ``n_iters``
    guarded-deflation power updates; the trial with the largest deflated
    tensor value is polished with ``n_iters`` further updates, and the
    component's eigenvalue is the deflated value at the polished vector.
    """
    t = np.asarray(t, dtype=float)
    k = t.shape[0]
    if t.shape != (k, k, k):
        raise DimensionError(f"expected a cubic tensor, got shape {t.shape}")
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.shape[0] < k:
        raise DimensionError(
            f"need at least k={k} initializations, got {inits.shape[0]}"
        )
    if inits.shape[1] != k or n_iters < 1:
        raise DimensionError("initializations must be k-vectors and n_iters >= 1")
    norms = np.linalg.norm(inits, axis=1)
    if np.any(norms == 0):
        raise DimensionError("zero initialization vector")
    inits = inits / norms[:, None]

    lam = np.zeros(0)
    phi_rows = np.zeros((0, k))
    eigenvalues = np.zeros(k)
    iterations = []

    def step(thetas):
        updates = _deflated_updates(t, thetas, lam, phi_rows, xi)
        if not np.all(np.isfinite(updates)):
            raise NumericalError(
                f"non-finite values during power iteration for component {len(lam) + 1}"
            )
        nrm = np.linalg.norm(updates, axis=1)
        safe = nrm > 1e-300
        out = thetas.copy()
        out[safe] = updates[safe] / nrm[safe, None]
        return out

    for i in range(k):
        thetas = inits.copy()
        for _ in range(n_iters):
            thetas = step(thetas)
        vals = _deflated_values(t, thetas, lam, phi_rows, xi)
        best = thetas[int(np.argmax(vals))][None, :]
        for _ in range(n_iters):
            best = step(best)
        phi = best[0]
        value = float(_deflated_values(t, best, lam, phi_rows, xi)[0])
        if value < 0:
            phi = -phi
            value = -value
        lam = np.append(lam, value)
        phi_rows = np.vstack([phi_rows, phi])
        eigenvalues[i] = value
        iterations.append(n_iters * (inits.shape[0] + 1))

    recon = np.einsum("i,ia,ib,ic->abc", lam, phi_rows, phi_rows, phi_rows)
    residual = float(np.linalg.norm(t - recon))
    return EigenResult(eigenvalues=eigenvalues, eigenvectors=phi_rows.T,
                       residual=residual, iterations=tuple(iterations))


def whitened_init_vectors(g, pure_set: np.ndarray, blocks: TensorBlocks,
                          w_a: np.ndarray, n_trials: int, seed: int,
                          dims: tuple[int, int, int] | None = None) -> np.ndarray:
    """Initialization vectors for the power method: whitened adjacency rows
    of the detected pure resources, padded with seeded random unit vectors
    when fewer than ``n_trials`` are available."""
    pure_set = np.asarray(pure_set, dtype=np.int64)
    if isinstance(g, HypergraphSample):
        rows = g.block_matrix(pure_set, blocks.a_users, blocks.a_tags)
    else:
        if dims is None:
            raise DimensionError("dims required for raw adjacency input")
        block_rows = _block_rows(blocks.a_users, blocks.a_tags, dims[1])
        sub = g[np.ix_(block_rows, pure_set)]
        if sp.issparse(sub):
            sub = sub.toarray()
        rows = np.asarray(sub, dtype=float).T
    cand = rows @ w_a
    norms = np.linalg.norm(cand, axis=1)
    cand = cand[norms > 1e-12]
    cand = cand[:n_trials]
    if cand.shape[0] < n_trials:
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((n_trials - cand.shape[0], w_a.shape[1]))
        cand = np.vstack([cand, extra]) if cand.size else extra
    return cand


def reconstruct_memberships(eig: EigenResult, w_a: np.ndarray,
                            g_rows: np.ndarray) -> np.ndarray:
    """Pre-threshold memberships of the nodes whose block-A adjacency rows
    are given: ``diag(lambda)^{-1} Phi^T w_a^T g_rows^T`` (k x n, columns
    not yet on the simplex)."""
    if np.any(np.abs(eig.eigenvalues) < 1e-300):
        raise NumericalError(
            "zero eigenvalue: membership reconstruction undefined"
        )
    if sp.issparse(g_rows):
        g_rows = g_rows.toarray()
    coeffs = np.asarray(g_rows, dtype=float) @ w_a
    return (eig.eigenvectors.T @ coeffs.T) / eig.eigenvalues[:, None]


def threshold_memberships(raw: np.ndarray, tau: float) -> np.ndarray:
    """Clamp negatives to zero, then zero out entries below ``tau`` keeping
    the rest unchanged (no renormalization)."""
    if tau < 0:
        raise ContractViolationError(f"threshold must be >= 0, got {tau}")
    out = np.maximum(np.asarray(raw, dtype=float), 0.0)
    out[out < tau] = 0.0
    return out


def simplex_project(raw: np.ndarray) -> np.ndarray:
    """Optional post-step for downstream consumers: clamp negatives and
    renormalize each column to the simplex (uniform when a column is all
    zero). Not part of the thresholded-error metric path."""
    out = np.maximum(np.asarray(raw, dtype=float), 0.0)
    sums = out.sum(axis=0)
    zero = sums <= 0
    out[:, zero] = 1.0 / out.shape[0]
    sums[zero] = 1.0
    return out / sums


def recover_user_tag_memberships(g, est_resources: np.ndarray,
                                 conn: ConnectivityPair,
                                 dims: tuple[int, int, int]):
    """Recover user and tag memberships given estimated resource
    memberships and known connectivity matrices.

    A least-squares fit of the matricized adjacency against the resource
    memberships estimates the combined user/tag factor; each community
    column matricizes to a rank-1 matrix whose SVD splits it into user and
    tag parts, and per-community scales are fixed so the membership rows
    sum to one after inverting the connectivity. With a homogeneous
    connectivity pair the recovered community order matches that of
    ``est_resources``; for a general pair, align the resource estimate to
    the connectivity's community basis first.
    """
    n_u, n_t, _ = dims
    k = est_resources.shape[0]
    if isinstance(g, HypergraphSample):
        g = g.matricized()
    kr_hat = g @ np.linalg.pinv(est_resources)
    if sp.issparse(kr_hat):
        kr_hat = np.asarray(kr_hat)
    f_u_hat = np.zeros((n_u, k))
    f_t_hat = np.zeros((n_t, k))
    for c in range(k):
        block = kr_hat[:, c].reshape(n_u, n_t)
        u, s, vt = np.linalg.svd(block, full_matrices=False)
        u1, v1 = u[:, 0], vt[0, :]
        if u1.sum() < 0:
            u1, v1 = -u1, -v1
        f_u_hat[:, c] = u1 * np.sqrt(s[0])
        f_t_hat[:, c] = v1 * np.sqrt(s[0])

    def to_memberships(f_hat, p_mat):
        p_inv = np.linalg.inv(p_mat)
        weights = p_inv @ np.ones(k)
        design = f_hat * weights[None, :]
        d, *_ = np.linalg.lstsq(design, np.ones(f_hat.shape[0]), rcond=None)
        return ((f_hat * d[None, :]) @ p_inv).T

    return to_memberships(f_u_hat, conn.p_ur), to_memberships(f_t_hat, conn.p_tr)
