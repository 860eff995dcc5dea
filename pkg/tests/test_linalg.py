"""Kernel identities for the matrix primitives."""

import numpy as np
import pytest

from folkcomm.errors import ContractViolationError, DimensionError
from folkcomm.linalg import (
    MatricizationShape,
    batched_top_two_singvals,
    khatri_rao,
    kronecker,
    ksvd,
    mat,
    pencil_top_two_singvals,
    product_ksvd,
    projector,
    sym_product_eigh,
    top_two_singvals,
    vec,
)

rng = np.random.default_rng(12345)


def test_vec_row_major():
    assert np.array_equal(vec(np.array([[1, 2], [3, 4]])), [1, 2, 3, 4])


def test_vec_degenerate():
    assert np.array_equal(vec(np.array([[7]])), [7])


def test_vec_mat_round_trip():
    a = rng.standard_normal((3, 5))
    assert np.array_equal(mat(vec(a), MatricizationShape(3, 5)), a)


def test_mat_examples():
    assert np.array_equal(mat(np.array([1, 2, 3, 4]), MatricizationShape(2, 2)),
                          [[1, 2], [3, 4]])
    assert np.array_equal(mat(np.zeros(6), MatricizationShape(2, 3)),
                          np.zeros((2, 3)))
    v = rng.standard_normal(12)
    assert np.array_equal(vec(mat(v, MatricizationShape(3, 4))), v)


def test_mat_shape_mismatch():
    with pytest.raises(DimensionError):
        mat(np.ones(5), MatricizationShape(2, 2))


def test_kronecker_basis():
    e1 = np.eye(2)[:, :1]
    out = kronecker(e1, e1)
    expect = np.zeros((4, 1))
    expect[0] = 1
    assert np.array_equal(out, expect)


def test_kronecker_mixed_product():
    a, b, c, d = (rng.standard_normal((2, 2)) for _ in range(4))
    lhs = kronecker(a, b) @ kronecker(c, d)
    rhs = kronecker(a @ c, b @ d)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_kronecker_hand_example():
    out = kronecker(np.array([[1, 2]]), np.array([[3], [4]]))
    assert np.array_equal(out, [[3, 6], [4, 8]])


def test_khatri_rao_identity_columns():
    out = khatri_rao(np.eye(2), np.eye(2))
    assert np.array_equal(out, [[1, 0], [0, 0], [0, 0], [0, 1]])


def test_khatri_rao_zero_column():
    a = rng.standard_normal((3, 2))
    b = np.column_stack([rng.standard_normal(4), np.zeros(4)])
    out = khatri_rao(a, b)
    assert np.all(out[:, 1] == 0)


def test_khatri_rao_hand_example():
    out = khatri_rao(np.array([[1.0, 0.0], [0.0, 1.0]]),
                     np.array([[2.0, 3.0], [4.0, 5.0]]))
    assert np.array_equal(out, [[2, 0], [4, 0], [0, 3], [0, 5]])


def test_khatri_rao_column_mismatch():
    with pytest.raises(DimensionError):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_ksvd_diagonal():
    u, s, vt = ksvd(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(s, [3.0, 2.0])


def test_ksvd_rank_one_exact():
    m = np.outer(rng.standard_normal(6), rng.standard_normal(4))
    u, s, vt = ksvd(m, 1)
    assert np.linalg.norm(m - u @ np.diag(s) @ vt) < 1e-10


def test_ksvd_residual_matches_tail_energy():
    m = rng.standard_normal((20, 10))
    u, s, vt = ksvd(m, 5)
    resid = np.linalg.norm(m - u @ np.diag(s) @ vt)
    full = np.linalg.svd(m, compute_uv=False)
    assert abs(resid - np.sqrt((full[5:] ** 2).sum())) < 1e-10


def test_ksvd_monotone_residual():
    m = rng.standard_normal((12, 9))
    resid = []
    for k in range(1, 9):
        u, s, vt = ksvd(m, k)
        resid.append(np.linalg.norm(m - u @ np.diag(s) @ vt))
    assert all(a >= b - 1e-12 for a, b in zip(resid, resid[1:]))


def test_ksvd_k_out_of_range():
    with pytest.raises(DimensionError):
        ksvd(np.ones((3, 3)), 4)


def test_ksvd_orthonormal_outputs():
    m = rng.standard_normal((15, 8))
    u, s, vt = ksvd(m, 4)
    assert np.max(np.abs(u.T @ u - np.eye(4))) < 1e-10
    assert np.max(np.abs(vt @ vt.T - np.eye(4))) < 1e-10


def test_projector_identity_columns():
    u = np.eye(4)[:, :2]
    p = projector(u)
    assert np.array_equal(p, np.diag([1.0, 1.0, 0.0, 0.0]))


def test_projector_idempotent_and_symmetric():
    q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    p = projector(q)
    assert np.max(np.abs(p @ p - p)) < 1e-8
    assert np.max(np.abs(p - p.T)) < 1e-12
    assert abs(np.trace(p) - 3) < 1e-6


def test_projector_preserves_span():
    q, _ = np.linalg.qr(rng.standard_normal((10, 4)))
    x = q @ rng.standard_normal(4)
    assert np.linalg.norm(projector(q) @ x - x) < 1e-8


def test_projector_rejects_non_orthonormal():
    with pytest.raises(ContractViolationError):
        projector(rng.standard_normal((5, 2)))


def test_top_two_diagonal():
    assert top_two_singvals(np.diag([5.0, 3.0])) == (5.0, 3.0)


def test_top_two_rank_one():
    m = np.outer(rng.standard_normal(6), rng.standard_normal(5))
    s1, s2 = top_two_singvals(m)
    assert s2 < 1e-10 * s1


def test_top_two_matches_full_svd():
    m = rng.standard_normal((8, 6))
    s = np.linalg.svd(m, compute_uv=False)
    s1, s2 = top_two_singvals(m)
    assert abs(s1 - s[0]) < 1e-10 * s[0]
    assert abs(s2 - s[1]) < 1e-10 * s[0]


def test_top_two_pads_one_dimensional():
    s1, s2 = top_two_singvals(np.array([[1.0, 2.0, 2.0]]))
    assert s1 == 3.0 and s2 == 0.0


def test_product_ksvd_matches_dense():
    x = rng.standard_normal((7, 20))
    y = rng.standard_normal((7, 15))
    u, s, vt = product_ksvd(x, y, 4)
    dense = np.linalg.svd(x.T @ y, compute_uv=False)
    assert np.allclose(s, dense[:4], atol=1e-10)
    recon = u @ np.diag(s) @ vt
    u2, s2, v2t = np.linalg.svd(x.T @ y)
    best = u2[:, :4] @ np.diag(s2[:4]) @ v2t[:4]
    assert np.max(np.abs(recon - best)) < 1e-10


def test_sym_product_eigh_matches_dense():
    b = rng.standard_normal((30, 6))
    e = rng.standard_normal((6, 6))
    vals, vecs = sym_product_eigh(b, e, 3)
    dense = b @ ((e + e.T) / 2) @ b.T
    ref = np.linalg.eigvalsh(dense)[::-1][:3]
    assert np.allclose(vals, ref, atol=1e-10)
    assert np.max(np.abs(dense @ vecs - vecs * vals[None, :])) < 1e-8


def test_pencil_top_two_matches_exact_svd():
    k, rows, cols, m = 3, 40, 35, 25
    basis = rng.standard_normal((k, rows, cols))
    coeffs = rng.standard_normal((k, m))
    s1, s2 = pencil_top_two_singvals(basis, coeffs, steps=30)
    stack = np.einsum("im,iuv->muv", coeffs, basis)
    e1, e2 = batched_top_two_singvals(stack)
    assert np.max(np.abs(s1 - e1) / e1) < 1e-8
    assert np.max(np.abs(s2 - e2) / e1) < 1e-8


def test_pencil_exact_on_rank_one():
    k, rows, cols = 2, 12, 10
    u = rng.standard_normal(rows)
    v = rng.standard_normal(cols)
    basis = np.stack([np.outer(u, v), np.zeros((rows, cols))])
    coeffs = np.array([[2.0], [0.5]])
    s1, s2 = pencil_top_two_singvals(basis, coeffs, steps=8)
    assert abs(s1[0] - 2.0 * np.linalg.norm(u) * np.linalg.norm(v)) < 1e-10
    assert s2[0] < 1e-10


# criterion-level property suite: >= 1000 random cases across the kernel
# identities, bundled here so it doubles as the module's fuzz coverage.

def test_property_suite_random_cases():
    prng = np.random.default_rng(999)
    for _ in range(250):
        p, q = prng.integers(1, 21, size=2)
        a = prng.standard_normal((p, q))
        assert np.array_equal(mat(vec(a), MatricizationShape(p, q)), a)
    for _ in range(250):
        dims = prng.integers(1, 5, size=8)
        a = prng.standard_normal((dims[0], dims[1]))
        b = prng.standard_normal((dims[2], dims[3]))
        c = prng.standard_normal((dims[1], dims[4]))
        d = prng.standard_normal((dims[3], dims[5]))
        lhs = kronecker(a, b) @ kronecker(c, d)
        rhs = kronecker(a @ c, b @ d)
        assert np.max(np.abs(lhs - rhs)) < 1e-12
    for _ in range(250):
        n1, n2, k = prng.integers(1, 8, size=3)
        a = prng.standard_normal((n1, k))
        b = prng.standard_normal((n2, k))
        kr = khatri_rao(a, b)
        for j in range(k):
            assert np.array_equal(kr[:, j],
                                  kronecker(a[:, j:j + 1], b[:, j:j + 1]).ravel())
    for _ in range(250):
        n = int(prng.integers(2, 12))
        r = int(prng.integers(1, n + 1))
        qmat, _ = np.linalg.qr(prng.standard_normal((n, r)))
        p = projector(qmat)
        assert np.max(np.abs(p @ p - p)) < 1e-8
        assert np.max(np.abs(p - p.T)) < 1e-12
        assert abs(np.trace(p) - r) < 1e-6
