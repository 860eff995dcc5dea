"""Sampling of mixed-membership tagging hypergraphs and their exact
population moments.

Each node draws a community membership vector i.i.d. from a mixture: with
probability ``rho`` an exact coordinate basis vector (community uniform on
[k]), otherwise a Dirichlet(alpha) draw. A hyperedge (u, t, r) appears when
two context-dependent Bernoulli draws both succeed; conditioned on the
resource context the user-side and tag-side draws are independent, which
gives every triple the closed-form inclusion probability implemented in
:func:`hyperedge_prob`.

Two samplers are provided. The latent sampler draws the per-triple context
assignments explicitly; the collapsed sampler draws each triple directly
with its marginal probability. They have identical distributions given the
memberships; the collapsed one needs a single uniform per triple and is the
default. Randomness is stream-split per fixed-size resource chunk, so the
output is independent of iteration order and of the parallelism degree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DimensionError
from .linalg import khatri_rao
from .model import (
    ConnectivityPair,
    HypergraphSample,
    MembershipMatrix,
    ModelParams,
    TensorBlocks,
)

_DOM_MEMBERS = {"users": 11, "tags": 12, "resources": 13}
_DOM_COLLAPSED = 21
_DOM_LATENT = 22

CHUNK_RESOURCES = 8


def _chunk_rng(seed: int, domain: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed, domain, chunk)))
    )


def sample_memberships(params: ModelParams):
    """Draw membership matrices for users, tags and resources.

    Columns are i.i.d. from the rho-mixture; pure nodes get exact basis
    vectors. Returns a (users, tags, resources) triple of
    :class:`MembershipMatrix`.
    """
    out = []
    for role, n in (("users", params.n_users), ("tags", params.n_tags),
                    ("resources", params.n_resources)):
        rng = _chunk_rng(params.seed, _DOM_MEMBERS[role], 0)
        is_pure = rng.random(n) < params.rho
        communities = rng.integers(0, params.k, size=n)
        mixed = rng.dirichlet(params.alpha, size=n).T
        entries = np.where(is_pure[None, :],
                           np.eye(params.k)[:, communities], mixed)
        out.append(MembershipMatrix(entries=entries, role=role))
    return tuple(out)


def factor_matrices(members_u: MembershipMatrix, members_t: MembershipMatrix,
                    conn: ConnectivityPair):
    """User and tag factor matrices (n x k): row u is ``pi_u^T P`` and row t
    is ``pi_t^T P~``."""
    f_u = members_u.entries.T @ conn.p_ur
    f_t = members_t.entries.T @ conn.p_tr
    return f_u, f_t


def hyperedge_prob(pi_u: np.ndarray, pi_t: np.ndarray, pi_r: np.ndarray,
                   conn: ConnectivityPair) -> float:
    """Exact inclusion probability of one triple given the memberships:
    ``sum_c pi_r(c) * (pi_u^T P)_c * (pi_t^T P~)_c``."""
    fu = np.asarray(pi_u, dtype=float) @ conn.p_ur
    ft = np.asarray(pi_t, dtype=float) @ conn.p_tr
    return float(np.asarray(pi_r, dtype=float) @ (fu * ft))


def hyperedge_prob_grid(members_u: MembershipMatrix,
                        members_t: MembershipMatrix,
                        members_r: MembershipMatrix,
                        conn: ConnectivityPair,
                        r_start: int = 0, r_stop: int | None = None) -> np.ndarray:
    """Exact inclusion probabilities for a slice of resources, shaped
    (resources, users, tags).

    The two Bernoulli draws of a triple share the resource's context, so
    the probability is a single sum over contexts weighted by the resource
    membership (a rank-k grid per resource, not an outer product).
    """
    f_u, f_t = factor_matrices(members_u, members_t, conn)
    if r_stop is None:
        r_stop = members_r.n
    pi_r = members_r.entries[:, r_start:r_stop]
    return np.einsum("uc,cr,tc->rut", f_u, pi_r, f_t)


def _resource_chunks(n_resources: int, chunk: int):
    return [(start, min(start + chunk, n_resources))
            for start in range(0, n_resources, chunk)]


def _run_chunks(tasks, n_jobs: int):
    if n_jobs <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def sample_hypergraph_collapsed(members_u: MembershipMatrix,
                                members_t: MembershipMatrix,
                                members_r: MembershipMatrix,
                                conn: ConnectivityPair,
                                seed: int,
                                chunk_resources: int = CHUNK_RESOURCES,
                                n_jobs: int = 1) -> HypergraphSample:
    """Sample the hypergraph with one uniform per triple against the exact
    marginal probability. Distributionally identical to the latent sampler."""
    f_u, f_t = factor_matrices(members_u, members_t, conn)
    n_u, n_t = f_u.shape[0], f_t.shape[0]
    n_r = members_r.n

    def make_task(start, stop):
        def task():
            rng = _chunk_rng(seed, _DOM_COLLAPSED, start)
            probs = np.einsum("uc,cr,tc->rut", f_u,
                              members_r.entries[:, start:stop], f_t)
            unif = rng.random(probs.shape)
            ci, ui, ti = np.nonzero(unif < probs)
            return np.column_stack((ui, ti, ci + start))
        return task

    tasks = [make_task(s, e) for s, e in _resource_chunks(n_r, chunk_resources)]
    parts = _run_chunks(tasks, n_jobs)
    triples = np.concatenate(parts) if parts else np.empty((0, 3), dtype=np.int64)
    return HypergraphSample(triples=triples, dims=(n_u, n_t, n_r))


def sample_hypergraph_latent(members_u: MembershipMatrix,
                             members_t: MembershipMatrix,
                             members_r: MembershipMatrix,
                             conn: ConnectivityPair,
                             seed: int,
                             chunk_resources: int = CHUNK_RESOURCES,
                             n_jobs: int = 1) -> HypergraphSample:
    """Sample by drawing the per-triple context assignments explicitly,
    then the two Bernoulli edges whose product defines the hyperedge."""
    cdf_u = np.cumsum(members_u.entries.T, axis=1)[:, :-1]
    cdf_t = np.cumsum(members_t.entries.T, axis=1)[:, :-1]
    cdf_r = np.cumsum(members_r.entries.T, axis=1)[:, :-1]
    n_u, n_t, n_r = members_u.n, members_t.n, members_r.n

    def make_task(start, stop):
        def task():
            rng = _chunk_rng(seed, _DOM_LATENT, start)
            width = stop - start
            unif = rng.random((5, width, n_u, n_t))
            z_u = (unif[0][..., None] >= cdf_u[None, :, None, :]).sum(axis=-1)
            z_t = (unif[1][..., None] >= cdf_t[None, None, :, :]).sum(axis=-1)
            z_r = (unif[2][..., None] >=
                   cdf_r[start:stop][:, None, None, :]).sum(axis=-1)
            edge_ur = unif[3] < conn.p_ur[z_u, z_r]
            edge_tr = unif[4] < conn.p_tr[z_t, z_r]
            ci, ui, ti = np.nonzero(edge_ur & edge_tr)
            return np.column_stack((ui, ti, ci + start))
        return task

    tasks = [make_task(s, e) for s, e in _resource_chunks(n_r, chunk_resources)]
    parts = _run_chunks(tasks, n_jobs)
    triples = np.concatenate(parts) if parts else np.empty((0, 3), dtype=np.int64)
    return HypergraphSample(triples=triples, dims=(n_u, n_t, n_r))


def expected_adjacency_factors(members_u: MembershipMatrix,
                               members_t: MembershipMatrix,
                               conn: ConnectivityPair) -> np.ndarray:
    """Khatri-Rao factor ``F (.) F~`` (n_users*n_tags x k); the expected
    adjacency is this factor times the resource memberships."""
    f_u, f_t = factor_matrices(members_u, members_t, conn)
    return khatri_rao(f_u, f_t)


def expected_adjacency(members_u: MembershipMatrix,
                       members_t: MembershipMatrix,
                       members_r: MembershipMatrix,
                       conn: ConnectivityPair) -> np.ndarray:
    """Dense expected matricized adjacency ``(F (.) F~) Pi_R``; entry
    ((u, t), r) equals :func:`hyperedge_prob` for that triple."""
    return expected_adjacency_factors(members_u, members_t, conn) @ members_r.entries


@dataclass(frozen=True)
class ThreeStarFactors:
    """Exact CP factors of the population 3-star tensor over a pure
    resource set: ``sum_i w_i h_a(:,i) x h_b(:,i) x h_c(:,i)``."""

    h_a: np.ndarray
    h_b: np.ndarray
    h_c: np.ndarray
    weights: np.ndarray

    def materialize(self) -> np.ndarray:
        return np.einsum("ai,bi,ci,i->abc", self.h_a, self.h_b, self.h_c,
                         self.weights)


def expected_three_star(members_u: MembershipMatrix,
                        members_t: MembershipMatrix,
                        members_r: MembershipMatrix,
                        conn: ConnectivityPair,
                        pure_set: np.ndarray,
                        blocks: TensorBlocks) -> ThreeStarFactors:
    """Population 3-star tensor factors over an exactly-pure resource set.

    The weights are the empirical community frequencies within
    ``pure_set``. Raises if the set contains a mixed node.
    """
    pure_set = np.asarray(pure_set, dtype=np.int64)
    if pure_set.size == 0:
        raise DimensionError("pure resource set is empty")
    cols = members_r.entries[:, pure_set]
    if not np.all((cols == 1.0).any(axis=0)):
        raise ContractViolationError(
            "pure_set contains a mixed resource node"
        )
    communities = np.argmax(cols, axis=0)
    weights = np.bincount(communities, minlength=members_r.k) / pure_set.size
    f_u, f_t = factor_matrices(members_u, members_t, conn)
    h = {}
    for name in ("a", "b", "c"):
        users, tags = blocks.users_tags(name)
        h[name] = khatri_rao(f_u[users], f_t[tags])
    return ThreeStarFactors(h_a=h["a"], h_b=h["b"], h_c=h["c"], weights=weights)
