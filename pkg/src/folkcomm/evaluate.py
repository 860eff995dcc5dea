"""Recovery metrics, model-assumption predicates, and theoretical bound
calculators.

Alignment resolves the inherent community-relabeling ambiguity; the error
metrics are the maximum per-community row norms (l2 and l1) of the aligned
difference. Assumption predicates evaluate the sample-size and separation
requirements with all asymptotic constants set to 1 and poly-log factors
dropped; margins are reported as ratios so callers can apply their own
constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError
from .model import MembershipMatrix

EXHAUSTIVE_ALIGN_MAX_K = 8

CONSTANTS_NOTE = ("all asymptotic constants set to 1, poly-log factors "
                  "dropped; margins are ratios")


def align_columns(est: np.ndarray, truth: np.ndarray) -> tuple[int, ...]:
    """Community permutation ``perm`` minimizing the total l2 row distance
    of ``est[perm, :]`` to ``truth``.

    Exhaustive search in lexicographic order (first minimum wins) for
    k <= 8, assignment solver beyond.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise DimensionError(f"shape mismatch: {est.shape} vs {truth.shape}")
    k = est.shape[0]
    cost = np.zeros((k, k))
    for i in range(k):
        cost[i] = np.linalg.norm(est - truth[i][None, :], axis=1)
    if k <= EXHAUSTIVE_ALIGN_MAX_K:
        best, best_cost = None, np.inf
        for perm in permutations(range(k)):
            c = sum(cost[i, perm[i]] for i in range(k))
            if c < best_cost:
                best, best_cost = perm, c
        return best
    rows, cols = linear_sum_assignment(cost)
    return tuple(int(cols[i]) for i in rows)


def _check_same_shape(est, truth):
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise DimensionError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return est, truth


def l2_max_row_error(est_aligned: np.ndarray, truth: np.ndarray) -> float:
    """Max over communities of the l2 norm of the per-node weight errors."""
    est, truth = _check_same_shape(est_aligned, truth)
    return float(np.linalg.norm(est - truth, axis=1).max())


def l1_max_row_error(est_aligned: np.ndarray, truth: np.ndarray) -> float:
    """Max over communities of the l1 norm of the per-node weight errors."""
    est, truth = _check_same_shape(est_aligned, truth)
    return float(np.abs(est - truth).sum(axis=1).max())


def pure_precision_recall(detected: np.ndarray, truth_pure_mask: np.ndarray):
    """Precision and recall of a detected pure-node index set against the
    ground-truth pure mask. Recall is vacuously 1 with no true pure nodes."""
    detected = np.asarray(detected, dtype=np.int64)
    n_true = int(truth_pure_mask.sum())
    if detected.size == 0:
        return 0.0, (1.0 if n_true == 0 else 0.0)
    hits = int(truth_pure_mask[detected].sum())
    precision = hits / detected.size
    recall = 1.0 if n_true == 0 else hits / n_true
    return float(precision), float(recall)


def dirichlet_second_moment(alpha) -> np.ndarray:
    """Closed-form E[pi pi^T] of a Dirichlet(alpha) vector."""
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum()
    m = np.outer(alpha, alpha) / (a0 * (a0 + 1.0))
    m[np.diag_indices_from(m)] = alpha * (alpha + 1.0) / (a0 * (a0 + 1.0))
    return m


def mixture_second_moment(k: int, rho: float, alpha) -> np.ndarray:
    """E[pi pi^T] of the membership mixture: pure part uniform over
    communities, mixed part Dirichlet(alpha)."""
    return rho * np.eye(k) / k + (1.0 - rho) * dirichlet_second_moment(alpha)


def mixture_mean(k: int, rho: float, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return rho / k + (1.0 - rho) * alpha / alpha.sum()


def empirical_second_moment(members: MembershipMatrix) -> np.ndarray:
    return members.entries @ members.entries.T / members.n


def _spectrum(second_moment: np.ndarray):
    vals = np.linalg.eigvalsh(np.asarray(second_moment, dtype=float))
    sigma_k = float(vals[0])
    sigma_1 = float(vals[-1])
    kappa = sigma_1 / sigma_k if sigma_k > 0 else float("inf")
    return sigma_1, sigma_k, kappa


def sample_requirement_rank_test(p: float, q: float, k: int,
                                 second_moment: np.ndarray) -> float:
    """Node count required for the rank test to succeed (unit constants):
    ``sigma_k^-3 * kappa^-2 * (((p-q)/k + q) / ((p-q)/sqrt(k) + q))^2``."""
    _, sigma_k, kappa = _spectrum(second_moment)
    if sigma_k <= 0:
        return float("inf")
    num = (p - q) / k + q
    den = (p - q) / np.sqrt(k) + q
    if den == 0:
        return float("inf")
    return float(sigma_k ** -3 * kappa ** -2 * (num / den) ** 2)


def separation_requirement(p: float, q: float, k: int, n: int, rho: float,
                           second_moment: np.ndarray):
    """Both sides of the edge-connectivity separation requirement
    ``(p-q)^2/p >= sqrt(k) / (sqrt(n*rho) * sigma_k)`` (unit constants)."""
    _, sigma_k, _ = _spectrum(second_moment)
    lhs = (p - q) ** 2 / p if p > 0 else 0.0
    if rho <= 0 or n <= 0 or sigma_k <= 0:
        return float(lhs), float("inf")
    rhs = np.sqrt(k) / (np.sqrt(n * rho) * sigma_k)
    return float(lhs), float(rhs)


@dataclass(frozen=True)
class AssumptionReport:
    """Checkable predicates with margins (ratio of available to required)."""

    sigma_k: float
    kappa: float
    rank_test_required_n: float
    rank_test_pass: bool
    rank_test_margin: float
    separation_lhs: float
    separation_rhs: float
    separation_pass: bool
    separation_margin: float
    kr_full_rank: bool | None
    pi_y_full_rank: bool | None
    note: str = CONSTANTS_NOTE


def assumption_report(p: float, q: float, k: int, n: int, rho: float,
                      second_moment: np.ndarray,
                      kr_sigma: np.ndarray | None = None,
                      pi_y: np.ndarray | None = None) -> AssumptionReport:
    """Evaluate the rank-test sample requirement and the separation
    requirement, plus optional full-rank checks on the combined factor
    (given its singular values) and on the projection-half memberships."""
    _, sigma_k, kappa = _spectrum(second_moment)
    required = sample_requirement_rank_test(p, q, k, second_moment)
    lhs, rhs = separation_requirement(p, q, k, n, rho, second_moment)
    kr_ok = None
    if kr_sigma is not None:
        kr_sigma = np.asarray(kr_sigma, dtype=float)
        kr_ok = bool(kr_sigma.size >= k
                     and kr_sigma[k - 1] > 1e-10 * max(kr_sigma[0], 1e-300))
    pi_y_ok = None
    if pi_y is not None:
        s = np.linalg.svd(np.asarray(pi_y, dtype=float), compute_uv=False)
        pi_y_ok = bool(s.size >= k and s[k - 1] > 1e-10 * max(s[0], 1e-300))
    return AssumptionReport(
        sigma_k=sigma_k,
        kappa=kappa,
        rank_test_required_n=required,
        rank_test_pass=bool(n >= required),
        rank_test_margin=float(n / required) if required > 0 else float("inf"),
        separation_lhs=lhs,
        separation_rhs=rhs,
        separation_pass=bool(lhs >= rhs),
        separation_margin=float(lhs / rhs) if rhs > 0 else float("inf"),
        kr_full_rank=kr_ok,
        pi_y_full_rank=pi_y_ok,
    )


@dataclass(frozen=True)
class TheoryBound:
    """Plug-in values (unit constants) of the recovery error bound and its
    constituent perturbation levels."""

    l2_bound: float
    eps_whitening: float
    eps_tensor: float
    eps_adjacency: float
    infinite: bool


def theoretical_error_bound(p: float, q: float, k: int, n: int, rho: float,
                            second_moment: np.ndarray,
                            mean: np.ndarray | None = None) -> TheoryBound:
    """Pre-threshold l2 recovery bound ``sqrt(k) p kappa / (sqrt(rho)
    (p-q)^2)`` with its constituent terms, all with unit constants.

    ``p == q`` or ``rho == 0`` makes the bound infinite (flagged).
    """
    _, sigma_k, kappa = _spectrum(second_moment)
    if mean is None:
        mean = np.full(k, 1.0 / k)
    p_mat = (p - q) * np.eye(k) + q * np.ones((k, k))
    sep = p - q
    if sep <= 0 or rho <= 0 or sigma_k <= 0:
        inf = float("inf")
        return TheoryBound(inf, inf, inf, inf, True)
    w_min = 1.0 / k
    col_mass = float((p_mat.T @ mean).max())
    had_mass = float((mean @ (p_mat * p_mat)).max())
    eps_g = max(np.sqrt(n * n * col_mass * col_mass),
                np.sqrt(0.5 * n * had_mass))
    eps_w = p / (np.sqrt(n * rho * w_min) * sep ** 2 * sigma_k)
    eps_t = p / (np.sqrt(n * rho) * w_min * sep ** 2 * sigma_k)
    bound = np.sqrt(k) * p * kappa / (np.sqrt(rho) * sep ** 2)
    return TheoryBound(float(bound), float(eps_w), float(eps_t),
                       float(eps_g), False)


@dataclass(frozen=True)
class RecoveryReport:
    """Aligned error metrics plus diagnostics for one recovery run."""

    permutation: tuple[int, ...]
    l2_max_row: float
    l1_max_row: float
    l1_max_row_thresholded: float | None
    threshold_tau: float | None
    pure_precision: float
    pure_recall: float
    assumptions: AssumptionReport | None
    theory: TheoryBound | None
    empirical_to_bound_ratio: float | None
    max_weight_bound: float | None
    max_weight_bound_satisfied: bool | None
    notes: tuple[str, ...] = ()


def sweep(grid, trials, seed, **kwargs):
    """Run the parameter sweep; see :func:`folkcomm.pipeline.run_sweep`."""
    from .pipeline import run_sweep

    return run_sweep(grid, trials, seed, **kwargs)
