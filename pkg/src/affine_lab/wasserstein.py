"""Empirical Wasserstein distances between clouds of cone elements.

Distances are computed in vec coordinates, where the Hilbert-Schmidt
norm becomes the Euclidean norm.  Equal-size clouds only: the optimal
coupling of two equal-size empirical measures is a permutation, so the
linear assignment problem gives the exact W_p.  A debiased Sinkhorn
variant covers clouds too large for the exact solver, and
``convolution_check`` tests the contraction W_2(rho*mu, rho*nu) <=
W_2(mu, nu) on samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.special

from . import cone
from .rng import philox_gen

_EXACT_CAP = 4096


@dataclass(frozen=True)
class TransportResult:
    distance: float
    p: float
    method: str                  # "exact_assignment" | "sinkhorn"
    epsilon: float | None = None
    se: float | None = None
    residual: float | None = None


def _as_cloud(x) -> np.ndarray:
    """Accept (P, n, n) matrices or (P, N) vec rows; return (P, N)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        return cone.vec(x)
    if x.ndim == 2:
        return x
    raise ValueError("sample cloud must be (P, n, n) or (P, N)")


def _check_pair(A, B):
    A, B = _as_cloud(A), _as_cloud(B)
    if A.shape != B.shape:
        raise ValueError(f"cloud shapes differ: {A.shape} vs {B.shape}")
    return A, B


def _cost_matrix(A: np.ndarray, B: np.ndarray, p: float) -> np.ndarray:
    d2 = np.maximum(
        np.sum(A * A, axis=1)[:, None]
        - 2.0 * (A @ B.T)
        + np.sum(B * B, axis=1)[None, :],
        0.0,
    )
    return d2 ** (0.5 * p)


def _matched_cost_se(costs: np.ndarray, p: float, n_boot: int, seed: int) -> float:
    gen = philox_gen(seed, 0xB007)
    n = costs.size
    reps = np.empty(n_boot)
    for b in range(n_boot):
        idx = gen.integers(0, n, size=n)
        reps[b] = (costs[idx].mean()) ** (1.0 / p)
    return float(reps.std(ddof=1))


def wp_exact(A, B, p: float = 2.0, bootstrap: int = 0, seed: int = 0) -> TransportResult:
    """Exact W_p between equal-size empirical measures via optimal assignment."""
    if not 1.0 <= p <= 2.0:
        raise ValueError("order p must lie in [1, 2]")
    A, B = _check_pair(A, B)
    if A.shape[0] > _EXACT_CAP:
        raise ValueError(f"cloud size {A.shape[0]} exceeds exact-solver cap {_EXACT_CAP}")
    C = _cost_matrix(A, B, p)
    rows, cols = scipy.optimize.linear_sum_assignment(C)
    matched = C[rows, cols]
    dist = float(matched.mean() ** (1.0 / p))
    se = _matched_cost_se(matched, p, bootstrap, seed) if bootstrap else None
    return TransportResult(distance=dist, p=p, method="exact_assignment", se=se)


def wp_sinkhorn(A, B, p: float = 2.0, epsilon: float = 1e-2,
                max_iter: int = 500, tol: float = 1e-4) -> TransportResult:
    """Entropic transport distance, debiased: S(A,B) - (S(A,A)+S(B,B))/2."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    A, B = _check_pair(A, B)

    def ot_cost(X, Y):
        C = _cost_matrix(X, Y, p)
        n = C.shape[0]
        logw = -np.log(n)
        scale = float(np.mean(C))
        if scale <= 0.0:
            return 0.0, 0.0
        # anneal the regularization down to the target, warm-starting the
        # potentials; plain iteration stalls when epsilon << cost scale
        eps_levels = [epsilon]
        while eps_levels[-1] < scale:
            eps_levels.append(eps_levels[-1] * 5.0)
        eps_levels.reverse()
        f = np.zeros(n)
        g = np.zeros(n)
        residual = np.inf
        for eps_now in eps_levels:
            last = eps_now == epsilon
            K = -C / eps_now
            for _ in range(max_iter):
                f_new = -eps_now * (scipy.special.logsumexp(K + g[None, :] / eps_now, axis=1) + logw)
                # row-marginal defect of the coupling built from (f, g)
                residual = float(np.sum(np.abs(np.exp((f - f_new) / eps_now) - 1.0))) / n
                f = f_new
                g = -eps_now * (scipy.special.logsumexp(K + f[:, None] / eps_now, axis=0) + logw)
                if residual < (tol if last else 1e-4):
                    break
            else:
                if last:
                    warnings.warn(f"sinkhorn did not converge: marginal defect {residual:.3e}")
        P = np.exp(K + f[:, None] / epsilon + g[None, :] / epsilon) / (n * n)
        return float(np.sum(P * C)), residual

    ab, r1 = ot_cost(A, B)
    aa, r2 = ot_cost(A, A)
    bb, r3 = ot_cost(B, B)
    debiased = max(ab - 0.5 * (aa + bb), 0.0)
    return TransportResult(distance=float(debiased ** (1.0 / p)), p=p,
                           method="sinkhorn", epsilon=epsilon,
                           residual=max(r1, r2, r3))


def convolution_check(rho, mu_s, nu_s, p: float = 2.0, n_boot: int = 32,
                      seed: int = 0):
    """Empirical test of the convolution contraction for W_p.

    lhs pairs each mu/nu draw with the same rho draw before transporting;
    rhs transports the plain clouds.  Passes when lhs <= rhs + 3 se with
    the ses bootstrapped from the matched assignment costs.
    """
    rho = _as_cloud(rho)
    mu_s, nu_s = _check_pair(mu_s, nu_s)
    if rho.shape != mu_s.shape:
        raise ValueError("rho cloud must match mu/nu cloud shape")
    lhs = wp_exact(rho + mu_s, rho + nu_s, p, bootstrap=n_boot, seed=seed)
    rhs = wp_exact(mu_s, nu_s, p, bootstrap=n_boot, seed=seed + 1)
    se = float(np.hypot(lhs.se, rhs.se))
    ok = lhs.distance <= rhs.distance + 3.0 * se
    return lhs.distance, rhs.distance, bool(ok)


def decay_fit(times, distances):
    """Least-squares exponential decay rate of positive distances."""
    times = np.asarray(times, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if times.size < 4:
        raise ValueError("need at least 4 points for a decay fit")
    if np.any(distances <= 0):
        raise ValueError("distances must be positive for a log fit")
    logd = np.log(distances)
    slope, intercept = np.polyfit(times, logd, 1)
    fitted = slope * times + intercept
    ss_res = float(np.sum((logd - fitted) ** 2))
    ss_tot = float(np.sum((logd - logd.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(intercept), float(r2)
