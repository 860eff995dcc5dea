"""Domain type invariants and partitioning."""

import numpy as np
import pytest

from folkcomm.errors import ConfigError, ContractViolationError
from folkcomm.model import (
    ConnectivityPair,
    HypergraphSample,
    MembershipMatrix,
    ModelParams,
    TensorBlocks,
    make_partition,
)


def make_params(**overrides):
    base = dict(k=3, n_users=30, n_tags=30, n_resources=30,
                p=0.8, q=0.1, rho=0.5, alpha=(1.0, 1.0, 1.0), seed=0)
    base.update(overrides)
    return ModelParams(**base)


def test_params_valid():
    params = make_params()
    assert params.dims == (30, 30, 30)


@pytest.mark.parametrize("overrides,fragment", [
    (dict(q=0.8), "separation"),
    (dict(q=0.9, p=0.8), "separation"),
    (dict(k=1, alpha=(1.0,)), "k"),
    (dict(n_users=2), "n_users"),
    (dict(rho=1.5), "rho"),
    (dict(alpha=(1.0,)), "alpha"),
    (dict(alpha=(1.0, -1.0, 1.0)), "alpha"),
])
def test_params_rejects_bad_values(overrides, fragment):
    with pytest.raises(ConfigError) as err:
        make_params(**overrides)
    assert fragment in str(err.value)


def test_connectivity_homogeneous_form():
    conn = ConnectivityPair.from_homogeneous(3, 0.8, 0.1)
    expect = 0.7 * np.eye(3) + 0.1
    assert np.array_equal(conn.p_ur, expect)
    assert np.array_equal(conn.p_tr, expect)
    assert conn.is_full_rank()


def test_connectivity_homogeneous_flag_checked():
    m = np.full((2, 2), 0.5)
    with pytest.raises(ContractViolationError):
        ConnectivityPair(p_ur=m, p_tr=m, homogeneous=(0.9, 0.1))


def test_connectivity_entries_range():
    with pytest.raises(ConfigError):
        ConnectivityPair(p_ur=np.full((2, 2), 1.5), p_tr=np.full((2, 2), 0.5))


def test_membership_simplex_enforced():
    with pytest.raises(ContractViolationError):
        MembershipMatrix(entries=np.array([[0.6, 0.2], [0.6, 0.2]]))


def test_membership_pure_mask_exact():
    entries = np.array([[1.0, 0.3, 0.0], [0.0, 0.7, 1.0]])
    members = MembershipMatrix(entries=entries)
    assert np.array_equal(members.pure_mask(), [True, False, True])
    assert np.array_equal(members.pure_communities(), [0, -1, 1])


def test_sample_round_trip_dense():
    triples = np.array([[0, 1, 0], [1, 0, 1], [2, 2, 1]])
    sample = HypergraphSample(triples=triples, dims=(3, 3, 2))
    dense = sample.to_dense()
    assert dense.shape == (9, 2)
    assert dense[0 * 3 + 1, 0] == 1
    assert dense[1 * 3 + 0, 1] == 1
    assert dense[2 * 3 + 2, 1] == 1
    assert dense.sum() == 3


def test_sample_rejects_duplicates_and_out_of_range():
    with pytest.raises(ConfigError):
        HypergraphSample(triples=np.array([[0, 0, 0], [0, 0, 0]]), dims=(2, 2, 2))
    with pytest.raises(ConfigError):
        HypergraphSample(triples=np.array([[0, 0, 5]]), dims=(2, 2, 2))


def test_sample_block_matrix():
    triples = np.array([[0, 1, 0], [1, 0, 1], [1, 1, 1]])
    sample = HypergraphSample(triples=triples, dims=(2, 2, 2))
    block = sample.block_matrix(np.array([1]), np.array([1]), np.array([0, 1]))
    assert np.array_equal(block, [[1.0, 1.0]])


def test_partition_balanced_halves():
    part = make_partition((30, 30, 10), k=3, seed=0)
    assert len(part.x) == 5 and len(part.y) == 5
    assert all(len(p) == 10 for p in part.u_parts)
    assert all(len(p) == 10 for p in part.t_parts)


def test_partition_deterministic():
    a = make_partition((30, 30, 30), k=3, seed=42)
    b = make_partition((30, 30, 30), k=3, seed=42)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.blocks.a_users, b.blocks.a_users)
    c = make_partition((30, 30, 30), k=3, seed=43)
    assert not np.array_equal(a.x, c.x)


def test_partition_rejects_small_sets():
    with pytest.raises(ConfigError):
        make_partition((8, 30, 30), k=3, seed=0)


def test_partition_blocks_cover_second_parts():
    part = make_partition((31, 29, 30), k=3, seed=7)
    users = np.sort(np.concatenate([part.blocks.a_users, part.blocks.b_users,
                                    part.blocks.c_users]))
    assert np.array_equal(users, np.sort(part.u_parts[1]))
    for tags in (part.blocks.a_tags, part.blocks.b_tags, part.blocks.c_tags):
        assert np.array_equal(np.sort(tags), np.sort(part.t_parts[1]))


def test_tensor_blocks_reject_overlapping_pairs():
    with pytest.raises(ConfigError):
        TensorBlocks(a_users=np.array([0]), a_tags=np.array([0, 1]),
                     b_users=np.array([0]), b_tags=np.array([1, 2]),
                     c_users=np.array([2]), c_tags=np.array([0]))
