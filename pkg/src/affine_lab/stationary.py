"""Invariant law of a subcritical affine process on the PSD cone.

The invariant measure pi is characterized by its Laplace transform

    L_pi(u) = exp(-int_0^infty F(psi(s, u)) ds),

finite exactly when the effective linear drift is subcritical.  This
module computes L_pi by tail-controlled truncation of that integral,
the first two stationary moments in closed form (Lyapunov solves),
and the explicit Wasserstein-p convergence bound

    W_p(p_t(x, .), pi) <= C1 e^{-dt}(|x| + m_p^{1/p})
                        + C2 e^{-dt/2}(|x|^{1/2} + m_{p/2}^{1/p}).

Transition moments E_x[X_t] and E_x[X_t (x) X_t] are also provided;
they serve as independent checks against both the stationary limits
and Monte Carlo ensembles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import cone
from . import riccati
from .cone import SuperOperator
from .errors import AffineLabError
from .params import AdmissibleParams, effective_drift

DEFAULT_TOL = 1e-9


def _state_matrix(p: AdmissibleParams) -> tuple[np.ndarray, np.ndarray]:
    """Effective drift pair (vec(b_hat), A) with A acting on the state side."""
    b_hat, B_hat = effective_drift(p)
    return cone.vec(b_hat), B_hat.matrix.T


def mean_invariant(p: AdmissibleParams) -> np.ndarray:
    """First moment of pi, solved from A z = -b_hat (valid since s(A) < 0)."""
    p.require_validated()
    b_vec, A = _state_matrix(p)
    cone.stability_constants(SuperOperator(p.dim, A))  # raises NotSubcritical
    cond = np.linalg.cond(A)
    if cond > 1e12:
        warnings.warn(f"effective drift solve is ill conditioned (cond={cond:.3e})")
    z = cone.unvec(-np.linalg.solve(A, b_vec), p.dim)
    return 0.5 * (z + z.T)


def _jump_intensity_sites(p: AdmissibleParams, z: np.ndarray):
    """Stationary arrival rate and site of every atom, m and mu combined."""
    rates, sites = [], []
    if p.m.n_atoms:
        for w, xi in zip(p.m.weights, p.m.sites):
            rates.append(float(w))
            sites.append(xi)
    if p.mu.n_atoms:
        for M, xi in zip(p.mu.masses, p.mu.sites):
            nrm2 = float(np.sum(xi * xi))
            rates.append(cone.trace_inner(z, M) / nrm2)
            sites.append(xi)
    return np.array(rates, dtype=float), sites


def second_moment_invariant(p: AdmissibleParams, tol: float = DEFAULT_TOL) -> SuperOperator:
    """Second moment int y (x) y pi(dy) on vec coordinates.

    Closed form: the stationary second moment S solves the Lyapunov
    equation A S + S A^T + Q = 0 sourced by the squared-mean coupling
    z b^T + b z^T (whose solution is exactly z z^T) plus one rank-one
    block per jump atom at its stationary arrival rate.  The effective
    drift A already carries the compensation of the state dependent
    atoms, so their rate-times-site blocks enter Q like the constant
    ones.
    """
    p.require_validated()
    _, A = _state_matrix(p)
    cone.stability_constants(SuperOperator(p.dim, A))  # raises NotSubcritical
    z = mean_invariant(p)
    z_vec = cone.vec(z)

    total = np.outer(z_vec, z_vec)

    rates, sites = _jump_intensity_sites(p, z)
    if rates.size:
        Q = np.zeros_like(A)
        for rate, xi in zip(rates, sites):
            v = cone.vec(xi)
            Q += rate * np.outer(v, v)
        total = total + scipy.linalg.solve_continuous_lyapunov(A, -Q)

    total = 0.5 * (total + total.T)
    lam = np.linalg.eigvalsh(total)
    if lam.min() < -max(tol, 1e-8) * max(1.0, lam.max()):
        raise AffineLabError(
            f"stationary second moment not PSD (min eigenvalue {lam.min():.3e})"
        )
    return SuperOperator(p.dim, total)


def laplace_invariant(p: AdmissibleParams, u: np.ndarray, tol: float = DEFAULT_TOL):
    """Laplace transform of pi at u, real cone element or complex test element.

    exp(-int_0^T* F(psi(s,u)) ds) with T* long enough that the neglected
    tail moves the exponent by less than tol/10.
    """
    p.require_validated()
    u = np.asarray(u, dtype=complex if np.iscomplexobj(u) else float)
    if not np.any(u):
        return 1.0
    C, M, delta = riccati.growth_envelope(p, u)
    u_norm = cone.hs_norm(u)
    T = riccati.tail_horizon(max(C, riccati.F_growth_constant(p)) * max(M, 1.0),
                             M, delta, u_norm, 0.1 * tol)
    if T <= 0.0:
        # u so small that even the whole-line tail bound is below tol
        return 1.0
    sol = riccati.solve_riccati(p, u, T, tol=min(tol, DEFAULT_TOL),
                                t_eval=np.array([0.0, T]))
    val = np.exp(-sol.phi[-1])
    if not np.iscomplexobj(u):
        val = float(np.real(val))
    return val


def invariance_residual(p: AdmissibleParams, u: np.ndarray, t: float,
                        tol: float = 1e-8) -> float:
    """Fixed point defect |e^{-phi(t,u)} L_pi(psi(t,u)) - L_pi(u)|."""
    if t == 0.0 or not np.any(u):
        return 0.0
    psi_t, phi_t = riccati.solve_riccati_terminal(p, u, t, tol=tol)
    lhs = np.exp(-phi_t) * laplace_invariant(p, psi_t, tol=tol)
    rhs = laplace_invariant(p, u, tol=tol)
    return float(abs(lhs - rhs))


@dataclass
class StationaryLaw:
    """Invariant measure summary: moments plus the stability certificate."""

    params: AdmissibleParams
    M: float
    delta: float
    mean: np.ndarray
    second_moment: SuperOperator
    tol: float = DEFAULT_TOL

    @property
    def m2(self) -> float:
        """int |y|^2 pi(dy) = trace of the second moment on vec coordinates."""
        return float(np.trace(self.second_moment.matrix))

    def moment_norm(self, pexp: float) -> float:
        """Jensen upper bound m_p <= m_2^{p/2} for 0 < p <= 2."""
        if not 0.0 < pexp <= 2.0:
            raise ValueError("moment order must lie in (0, 2]")
        return self.m2 ** (0.5 * pexp)


def invariant_law(p: AdmissibleParams, tol: float = DEFAULT_TOL) -> StationaryLaw:
    p.require_validated()
    _, A = _state_matrix(p)
    M, delta = cone.stability_constants(SuperOperator(p.dim, A))
    return StationaryLaw(
        params=p,
        M=M,
        delta=delta,
        mean=mean_invariant(p),
        second_moment=second_moment_invariant(p, tol),
        tol=tol,
    )


def total_jump_mass(p: AdmissibleParams) -> float:
    """HS norm of the total operator mass of the state dependent measure."""
    return float(cone.hs_norm(p.mu.total_mass())) if p.mu.n_atoms else 0.0


def wasserstein_bound(law: StationaryLaw, x: np.ndarray, pexp: float, t: float) -> float:
    """Explicit convergence rate bound on W_p(p_t(x,.), pi) for p in [1,2]."""
    if not 1.0 <= pexp <= 2.0:
        raise ValueError("pexp must lie in [1, 2]")
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    M, delta = law.M, law.delta
    x_norm = cone.hs_norm(x)
    c1 = 2.0 * M
    term1 = c1 * np.exp(-delta * t) * (x_norm + law.moment_norm(pexp) ** (1.0 / pexp))
    mass = total_jump_mass(law.params)
    if mass == 0.0:
        return float(term1)
    c2 = np.sqrt(2.0) * M ** 1.5 * np.sqrt(mass / delta)
    term2 = c2 * np.exp(-0.5 * delta * t) * (
        np.sqrt(x_norm) + law.moment_norm(0.5 * pexp) ** (1.0 / pexp)
    )
    return float(term1 + term2)


def transition_mean(p: AdmissibleParams, x: np.ndarray, t: float) -> np.ndarray:
    """E_x[X_t] = e^{tA} x + int_0^t e^{sA} b_hat ds via one augmented expm."""
    p.require_validated()
    b_vec, A = _state_matrix(p)
    N = b_vec.shape[0]
    aug = np.zeros((N + 1, N + 1))
    aug[:N, :N] = A
    aug[:N, N] = b_vec
    E = scipy.linalg.expm(t * aug)
    v = E[:N, :N] @ cone.vec(x) + E[:N, N]
    out = cone.unvec(v, p.dim)
    return 0.5 * (out + out.T)


def transition_second_moment(p: AdmissibleParams, x: np.ndarray, t: float,
                             rtol: float = 1e-10) -> np.ndarray:
    """E_x[X_t (x) X_t] on vec coordinates by integrating the moment ODE."""
    import scipy.integrate

    p.require_validated()
    b_vec, A = _state_matrix(p)
    N = b_vec.shape[0]

    rate_sites = []
    if p.m.n_atoms:
        for w, xi in zip(p.m.weights, p.m.sites):
            rate_sites.append((float(w), np.zeros(N), cone.vec(xi)))
    if p.mu.n_atoms:
        for M_op, xi in zip(p.mu.masses, p.mu.sites):
            m_vec = cone.vec(M_op) / float(np.sum(xi * xi))
            rate_sites.append((0.0, m_vec, cone.vec(xi)))

    def rhs(_, y):
        z = y[:N]
        S = y[N:].reshape(N, N)
        dz = A @ z + b_vec
        dS = A @ S + S @ A.T + np.outer(b_vec, z) + np.outer(z, b_vec)
        for w0, m_vec, xi_vec in rate_sites:
            rate = w0 + m_vec @ z
            dS += rate * np.outer(xi_vec, xi_vec)
        return np.concatenate([dz, dS.ravel()])

    x_vec = cone.vec(x)
    y0 = np.concatenate([x_vec, np.outer(x_vec, x_vec).ravel()])
    sol = scipy.integrate.solve_ivp(rhs, (0.0, t), y0, rtol=rtol, atol=1e-12,
                                    method="RK45")
    if not sol.success:
        raise AffineLabError(f"moment ODE integration failed: {sol.message}")
    S = sol.y[N:, -1].reshape(N, N)
    return 0.5 * (S + S.T)
