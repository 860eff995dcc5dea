"""Domain types: model parameters, memberships, connectivity, hypergraph
samples, and node partitions.

Nodes come in three roles (users, tags, resources). Hyperedges are
0/1-valued triples (u, t, r); the matricized adjacency stacks the (u, t)
pair axis row-major (pair index ``u * n_tags + t``) so each resource owns
one column of a ``n_users*n_tags x n_resources`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractViolationError, DimensionError

SIMPLEX_TOL = 1e-9

ROLES = ("users", "tags", "resources", "combined")


@dataclass(frozen=True)
class ModelParams:
    """Generator parameters.

    ``p`` is the within-community connection probability, ``q`` the
    cross-community one (separation requires q < p), ``rho`` the pure-node
    probability and ``alpha`` the Dirichlet concentration of the mixed part
    of the membership distribution.
    """

    k: int
    n_users: int
    n_tags: int
    n_resources: int
    p: float
    q: float
    rho: float
    alpha: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        for name, n in (("n_users", self.n_users), ("n_tags", self.n_tags),
                        ("n_resources", self.n_resources)):
            if n < self.k:
                raise ConfigError(f"{name}={n} must be >= k={self.k}")
        if not (0.0 <= self.q < self.p <= 1.0):
            raise ConfigError(
                f"separation requires 0 <= q < p <= 1, got p={self.p}, q={self.q}"
            )
        if not (0.0 <= self.rho <= 1.0):
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if len(self.alpha) != self.k:
            raise ConfigError(
                f"alpha must have length k={self.k}, got {len(self.alpha)}"
            )
        if any(a <= 0 for a in self.alpha):
            raise ConfigError("alpha entries must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_users, self.n_tags, self.n_resources)


@dataclass(frozen=True)
class ConnectivityPair:
    """Community connectivity matrices: ``p_ur`` links user and resource
    communities, ``p_tr`` links tag and resource communities."""

    p_ur: np.ndarray
    p_tr: np.ndarray
    homogeneous: tuple[float, float] | None = None

    def __post_init__(self):
        p_ur = np.asarray(self.p_ur, dtype=float)
        p_tr = np.asarray(self.p_tr, dtype=float)
        object.__setattr__(self, "p_ur", p_ur)
        object.__setattr__(self, "p_tr", p_tr)
        if p_ur.shape != p_tr.shape or p_ur.ndim != 2 or p_ur.shape[0] != p_ur.shape[1]:
            raise DimensionError("connectivity matrices must be equal-shape square")
        for m in (p_ur, p_tr):
            if np.any(m < 0) or np.any(m > 1):
                raise ConfigError("connectivity entries must lie in [0, 1]")
        if self.homogeneous is not None:
            p, q = self.homogeneous
            expect = (p - q) * np.eye(self.k) + q * np.ones((self.k, self.k))
            if not (np.array_equal(p_ur, expect) and np.array_equal(p_tr, expect)):
                raise ContractViolationError(
                    "homogeneous flag set but matrices differ from (p-q)I + q*11T"
                )

    @property
    def k(self) -> int:
        return self.p_ur.shape[0]

    @classmethod
    def from_homogeneous(cls, k: int, p: float, q: float) -> "ConnectivityPair":
        m = (p - q) * np.eye(k) + q * np.ones((k, k))
        return cls(p_ur=m, p_tr=m.copy(), homogeneous=(p, q))

    def is_full_rank(self, tol: float = 1e-10) -> bool:
        s_ur = np.linalg.svd(self.p_ur, compute_uv=False)
        s_tr = np.linalg.svd(self.p_tr, compute_uv=False)
        return bool(s_ur[-1] > tol * max(s_ur[0], 1e-300)
                    and s_tr[-1] > tol * max(s_tr[0], 1e-300))


@dataclass(frozen=True)
class MembershipMatrix:
    """k x n matrix of community weights; every column lies on the simplex.

    A column counts as pure when its largest weight equals 1.0 exactly in
    float64 (the sampler writes exact basis vectors for pure nodes, and the
    CSV round trip preserves them bit for bit).
    """

    entries: np.ndarray
    role: str = "combined"

    def __post_init__(self):
        entries = np.ascontiguousarray(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2:
            raise DimensionError("membership entries must be a k x n matrix")
        if self.role not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {self.role!r}")
        if np.any(entries < -1e-12) or np.any(entries > 1 + 1e-12):
            raise ContractViolationError("membership weights must lie in [0, 1]")
        col_sums = entries.sum(axis=0)
        if entries.shape[1] and np.max(np.abs(col_sums - 1.0)) > SIMPLEX_TOL:
            worst = float(np.max(np.abs(col_sums - 1.0)))
            raise ContractViolationError(
                f"membership columns must sum to 1 (worst deviation {worst:.3e})"
            )

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def pure_mask(self) -> np.ndarray:
        return (self.entries == 1.0).any(axis=0)

    def pure_communities(self) -> np.ndarray:
        """Community index per node for pure nodes, -1 for mixed ones."""
        out = np.full(self.n, -1, dtype=int)
        mask = self.pure_mask()
        if mask.any():
            out[mask] = np.argmax(self.entries[:, mask], axis=0)
        return out


@dataclass(frozen=True)
class HypergraphSample:
    """Observed 0/1 hyperedges as a deduplicated (u, t, r) triple list.

    Triples are stored 0-based and lexicographically sorted; files use
    1-based indices.
    """

    triples: np.ndarray
    dims: tuple[int, int, int]

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        n_u, n_t, n_r = self.dims
        if len(triples):
            lo = triples.min(axis=0)
            hi = triples.max(axis=0)
            if lo.min() < 0 or np.any(hi >= np.array([n_u, n_t, n_r])):
                raise ConfigError("triple indices out of range for dims")
            flat = (triples[:, 0] * n_t + triples[:, 1]) * n_r + triples[:, 2]
            order = np.argsort(flat, kind="stable")
            flat = flat[order]
            if np.any(np.diff(flat) == 0):
                raise ConfigError("duplicate triples are not allowed")
            triples = triples[order]
        object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "dims", (int(n_u), int(n_t), int(n_r)))

    @property
    def n_edges(self) -> int:
        return self.triples.shape[0]

    def matricized(self) -> sp.csc_matrix:
        """Sparse ``n_users*n_tags x n_resources`` 0/1 adjacency matrix."""
        n_u, n_t, n_r = self.dims
        rows = self.triples[:, 0] * n_t + self.triples[:, 1]
        cols = self.triples[:, 2]
        m = sp.csc_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(n_u * n_t, n_r)
        )
        return m

    def to_dense(self) -> np.ndarray:
        """Dense matricized adjacency; only for desk-scale dims."""
        return self.matricized().toarray()

    def block_matrix(self, resources: np.ndarray, users: np.ndarray,
                     tags: np.ndarray) -> np.ndarray:
        """Dense (len(resources) x len(users)*len(tags)) slice of the
        adjacency, rows ordered by resource, columns row-major in (u, t)."""
        n_u, n_t, _ = self.dims
        r_pos = np.full(self.dims[2], -1, dtype=np.int64)
        r_pos[np.asarray(resources, dtype=np.int64)] = np.arange(len(resources))
        u_pos = np.full(n_u, -1, dtype=np.int64)
        u_pos[np.asarray(users, dtype=np.int64)] = np.arange(len(users))
        t_pos = np.full(n_t, -1, dtype=np.int64)
        t_pos[np.asarray(tags, dtype=np.int64)] = np.arange(len(tags))
        tri = self.triples
        keep = (r_pos[tri[:, 2]] >= 0) & (u_pos[tri[:, 0]] >= 0) & (t_pos[tri[:, 1]] >= 0)
        tri = tri[keep]
        out = np.zeros((len(resources), len(users) * len(tags)))
        out[r_pos[tri[:, 2]], u_pos[tri[:, 0]] * len(tags) + t_pos[tri[:, 1]]] = 1.0
        return out


@dataclass(frozen=True)
class TensorBlocks:
    """Three disjoint product blocks of (user, tag) pairs used for the
    3-star tensor: block A is ``a_users x a_tags`` and so on."""

    a_users: np.ndarray
    a_tags: np.ndarray
    b_users: np.ndarray
    b_tags: np.ndarray
    c_users: np.ndarray
    c_tags: np.ndarray

    def __post_init__(self):
        for name in ("a_users", "a_tags", "b_users", "b_tags", "c_users", "c_tags"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.size == 0:
                raise ConfigError(f"tensor block {name} is empty")
            object.__setattr__(self, name, arr)
        pairs = [("a", "b"), ("a", "c"), ("b", "c")]
        for x, y in pairs:
            xu = set(getattr(self, f"{x}_users").tolist())
            yu = set(getattr(self, f"{y}_users").tolist())
            xt = set(getattr(self, f"{x}_tags").tolist())
            yt = set(getattr(self, f"{y}_tags").tolist())
            if (xu & yu) and (xt & yt):
                raise ConfigError(
                    f"tensor blocks {x} and {y} overlap as (user, tag) pair sets"
                )

    def users_tags(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        return getattr(self, f"{which}_users"), getattr(self, f"{which}_tags")

    def sizes(self) -> tuple[int, int, int]:
        return (len(self.a_users) * len(self.a_tags),
                len(self.b_users) * len(self.b_tags),
                len(self.c_users) * len(self.c_tags))


@dataclass(frozen=True)
class PartitionSpec:
    """Random node partition used by the two-stage algorithm.

    Resources split into halves ``x`` and ``y`` (projection built on one
    half, rank test applied to the other). Users and tags split into three
    parts each; the tensor blocks are the diagonal product cells of the
    second parts split three ways.
    """

    x: np.ndarray
    y: np.ndarray
    u_parts: tuple[np.ndarray, np.ndarray, np.ndarray]
    t_parts: tuple[np.ndarray, np.ndarray, np.ndarray]
    blocks: TensorBlocks
    dims: tuple[int, int, int]
    seed: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        u_parts = tuple(np.asarray(p, dtype=np.int64) for p in self.u_parts)
        t_parts = tuple(np.asarray(p, dtype=np.int64) for p in self.t_parts)
        object.__setattr__(self, "u_parts", u_parts)
        object.__setattr__(self, "t_parts", t_parts)
        n_u, n_t, n_r = self.dims
        if set(x.tolist()) & set(y.tolist()):
            raise ConfigError("resource halves X and Y overlap")
        if len(x) + len(y) != n_r or set(x.tolist()) | set(y.tolist()) != set(range(n_r)):
            raise ConfigError("X and Y must partition the resource set")
        for parts, n, label in ((u_parts, n_u, "user"), (t_parts, n_t, "tag")):
            joined = np.concatenate(parts)
            if len(joined) != n or set(joined.tolist()) != set(range(n)):
                raise ConfigError(f"{label} parts must partition [0, {n})")
            if any(len(p) == 0 for p in parts):
                raise ConfigError(f"{label} parts must be nonempty")


def _split(perm: np.ndarray, pieces: int) -> list[np.ndarray]:
    """Split into nearly equal contiguous pieces (sizes within 1), then sort
    each piece for stable downstream indexing."""
    out = [np.sort(chunk) for chunk in np.array_split(perm, pieces)]
    return out


def make_partition(dims: tuple[int, int, int], k: int, seed: int = 0) -> PartitionSpec:
    """Uniformly random balanced partition, deterministic given the seed.

    Requires every node set to have at least 3k elements so each part can
    still support rank-k structure.
    """
    n_u, n_t, n_r = dims
    for n, label in ((n_u, "users"), (n_t, "tags"), (n_r, "resources")):
        if n < 3 * k:
            raise ConfigError(
                f"partition needs at least 3k={3 * k} {label}, got {n}"
            )
    rng = np.random.default_rng(seed)
    x, y = _split(rng.permutation(n_r), 2)
    u_parts = _split(rng.permutation(n_u), 3)
    t_parts = _split(rng.permutation(n_t), 3)
    # Pair blocks: thirds of the second user part, each crossed with the
    # full second tag part. Disjoint user parts keep the pair sets disjoint
    # while using all available tag columns for each block.
    bu = _split(rng.permutation(u_parts[1]), 3)
    blocks = TensorBlocks(
        a_users=bu[0], a_tags=t_parts[1],
        b_users=bu[1], b_tags=t_parts[1],
        c_users=bu[2], c_tags=t_parts[1],
    )
    return PartitionSpec(x=x, y=y, u_parts=tuple(u_parts), t_parts=tuple(t_parts),
                         blocks=blocks, dims=(n_u, n_t, n_r), seed=seed)
