"""Transform exponents F, R and the generalized Riccati ODE solver.

The transition Laplace transform of the affine process is
exp(-phi(t,u) - <x, psi(t,u)>), where psi solves psi' = R(psi), psi(0) = u and
phi accumulates F along psi. Both right-hand sides are finite sums here
(atomic jump measures), and they extend to complex arguments by evaluating the
same expressions on the complexified space; the Fourier-strip callers rely on
that continuation.

The integrator is an adaptive embedded Dormand-Prince 4(5) pair with:
  - exact stepping onto every requested output time (no interpolation error at
    the reported grid),
  - cubic Hermite dense output between accepted steps,
  - a safeguard hook after each accepted step: the real-mode hook projects
    psi back onto the cone when roundoff pushes an eigenvalue slightly
    negative and rejects the step when the violation is structural; the
    complex-mode hook aborts when the solution leaves the transform domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cone import hs_norm, sym_dim, trace_inner, unvec, vec
from .errors import DomainBlowup, StepSizeUnderflow
from .params import AdmissibleParams, CHI_CUTOFF, effective_drift
from . import cone as _cone

DEFAULT_TOL = 1e-9

# Dormand-Prince 4(5) tableau (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4

_MAX_STEPS = 1_000_000


def _atom_terms(p: AdmissibleParams):
    """Precompute per-atom data for F and R evaluation."""
    m_sites = p.m.sites
    m_w = p.m.weights
    m_small = (
        np.sqrt(np.sum(m_sites**2, axis=(1, 2))) <= CHI_CUTOFF
        if p.m.n_atoms
        else np.zeros(0, dtype=bool)
    )
    mu_sites = p.mu.sites
    mu_norm2 = np.sum(mu_sites**2, axis=(1, 2)) if p.mu.n_atoms else np.zeros(0)
    mu_small = np.sqrt(mu_norm2) <= CHI_CUTOFF if p.mu.n_atoms else np.zeros(0, dtype=bool)
    return m_sites, m_w, m_small, mu_sites, p.mu.masses, mu_norm2, mu_small


def _jump_integrand(s, small):
    """e^{-s} - 1 + s*1{small}, the integrand shared by F and R."""
    out = np.exp(-s) - 1.0
    if np.any(small):
        out = out + np.where(small, s, 0.0)
    return out


def F_eval(p: AdmissibleParams, u: np.ndarray):
    """F(u) = <b,u> - sum_k w_k (e^{-<xi_k,u>} - 1 + <chi(xi_k),u>)."""
    p.require_validated()
    val = trace_inner(p.b, u)
    if p.m.n_atoms:
        m_sites, m_w, m_small, *_ = _atom_terms(p)
        s = trace_inner(m_sites, u)
        val = val - np.sum(m_w * _jump_integrand(s, m_small))
    return val


def R_eval(p: AdmissibleParams, u: np.ndarray) -> np.ndarray:
    """R(u) = B*(u) - sum_k (e^{-<xi_k,u>} - 1 + <chi(xi_k),u>) M_k/||xi_k||^2."""
    p.require_validated()
    out = unvec(p.B.matrix.T @ vec(u), p.dim)
    if p.mu.n_atoms:
        _, _, _, mu_sites, mu_masses, mu_norm2, mu_small = _atom_terms(p)
        s = trace_inner(mu_sites, u)
        coef = _jump_integrand(s, mu_small) / mu_norm2
        out = out - np.einsum("k,kij->ij", coef, mu_masses)
    return out


def F_growth_constant(p: AdmissibleParams) -> float:
    """C with |F(u)| <= C (||u|| + ||u||^2): ||b|| plus the second moment of m."""
    return hs_norm(p.b) + p.m.second_moment()


def R_growth_constant(p: AdmissibleParams) -> float:
    """C with ||R(u)|| <= C (||u|| + ||u||^2): ||B|| plus ||mu(total)||."""
    return p.B.opnorm() + hs_norm(p.mu.total_mass())


@dataclass
class _Knots:
    """Accepted-step record for dense output."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    derivs: list = field(default_factory=list)

    def append(self, t, y, f):
        self.times.append(t)
        self.states.append(y)
        self.derivs.append(f)

    def finalize(self):
        return (
            np.asarray(self.times),
            np.asarray(self.states),
            np.asarray(self.derivs),
        )


def _hermite_eval(knot_t, knot_y, knot_f, t):
    """Cubic Hermite interpolation at scalar time t within the knot span."""
    idx = int(np.searchsorted(knot_t, t, side="right") - 1)
    idx = max(0, min(idx, len(knot_t) - 2))
    t0, t1 = knot_t[idx], knot_t[idx + 1]
    h = t1 - t0
    if h <= 0:
        return knot_y[idx]
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s**2 * (3 - 2 * s)
    h11 = s**2 * (s - 1)
    return (
        h00 * knot_y[idx]
        + h10 * h * knot_f[idx]
        + h01 * knot_y[idx + 1]
        + h11 * h * knot_f[idx + 1]
    )


def _integrate(rhs, y0, T, tol, out_times, guard=None):
    """Adaptive DP45 from 0 to T, stepping exactly onto out_times.

    guard(y) may return None (accept), a replacement state (accept after
    safeguard), or raise/request rejection by returning the string "reject".
    Returns (out_states, knots) with out_states[i] the state at out_times[i].
    """
    y0 = np.asarray(y0)
    out_times = np.asarray(out_times, dtype=float)
    rtol = atol = float(tol)
    t = 0.0
    y = y0
    f = rhs(t, y)
    knots = _Knots()
    knots.append(t, y, f)
    out_states = []
    out_iter = iter(out_times)
    next_out = next(out_iter, None)
    while next_out is not None and next_out <= 0.0:
        out_states.append(y0)
        next_out = next(out_iter, None)
    if next_out is None and T <= 0.0:
        kt, ky, kf = knots.finalize()
        return np.asarray(out_states), (kt, ky, kf)

    scale0 = atol + rtol * np.max(np.abs(y))
    fn0 = np.max(np.abs(f)) / scale0 if scale0 > 0 else 0.0
    h = min(T, 0.1 / fn0) if fn0 > 0 else min(T, 1.0)
    h = max(h, 1e-8 * max(T, 1.0))

    n_steps = 0
    while t < T - 1e-14 * max(T, 1.0):
        n_steps += 1
        if n_steps > _MAX_STEPS:
            raise StepSizeUnderflow(f"step budget exhausted at t = {t:.6g}")
        h = min(h, T - t)
        if next_out is not None:
            h = min(h, next_out - t)
        if h < 1e-14 * max(T, 1.0):
            raise StepSizeUnderflow(f"step size underflow at t = {t:.6g}")

        k = [f]
        failed = False
        for i in range(1, 7):
            yi = y + h * sum(a * ki for a, ki in zip(_DP_A[i], k))
            if not np.all(np.isfinite(yi)):
                failed = True
                break
            k.append(rhs(t + _DP_C[i] * h, yi))
        if failed:
            h *= 0.5
            continue
        y5 = y + h * sum(b * ki for b, ki in zip(_DP_B5, k) if b != 0.0)
        err_vec = h * sum(e * ki for e, ki in zip(_DP_E, k) if e != 0.0)
        if not np.all(np.isfinite(y5)):
            h *= 0.5
            continue
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(np.abs(err_vec / scale) ** 2)))
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** (-0.2))
            continue

        y_new = y5
        f_new = k[6]  # FSAL: rhs at (t+h, y5)
        if guard is not None:
            verdict = guard(y_new)
            if isinstance(verdict, str):
                h *= 0.5
                continue
            if verdict is not None:
                y_new = verdict
                f_new = rhs(t + h, y_new)

        t += h
        y = y_new
        f = f_new
        knots.append(t, y, f)
        while next_out is not None and t >= next_out - 1e-14 * max(T, 1.0):
            out_states.append(y)
            next_out = next(out_iter, None)
        if err > 0:
            h *= min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        else:
            h *= 5.0

    while next_out is not None:
        out_states.append(y)
        next_out = next(out_iter, None)
    kt, ky, kf = knots.finalize()
    return np.asarray(out_states), (kt, ky, kf)


@dataclass
class RiccatiSolution:
    """Solution bundle on an output grid plus dense interpolation data."""

    u0: np.ndarray
    times: np.ndarray
    psi: np.ndarray  # (len(times), n, n)
    phi: np.ndarray  # (len(times),)
    tol: float
    dim: int
    _knots: tuple = field(repr=False, default=None)

    def psi_at(self, t: float) -> np.ndarray:
        kt, ky, kf = self._knots
        y = _hermite_eval(kt, ky, kf, float(t))
        return unvec(y[:-1], self.dim)

    def phi_at(self, t: float) -> float:
        kt, ky, kf = self._knots
        return _hermite_eval(kt, ky, kf, float(t))[-1]


def _pack(psi, phi):
    return np.concatenate([vec(psi), [phi]])


def _riccati_rhs(p: AdmissibleParams):
    n = p.dim
    Bt = p.B.matrix.T
    m_sites, m_w, m_small, mu_sites, mu_masses, mu_norm2, mu_small = _atom_terms(p)
    m_vec = vec(m_sites) if p.m.n_atoms else None
    mu_vec = vec(mu_sites) if p.mu.n_atoms else None
    mu_mass_vec = vec(mu_masses) if p.mu.n_atoms else None
    b_vec = vec(p.b)

    def rhs(t, y):
        v = y[:-1]
        dpsi = Bt @ v
        dphi = b_vec @ v
        if m_vec is not None:
            s = m_vec @ v
            dphi = dphi - np.sum(m_w * _jump_integrand(s, m_small))
        if mu_vec is not None:
            s = mu_vec @ v
            coef = _jump_integrand(s, mu_small) / mu_norm2
            dpsi = dpsi - coef @ mu_mass_vec
        out = np.empty_like(y)
        out[:-1] = dpsi
        out[-1] = dphi
        return out

    return rhs


def _cone_guard(dim: int, tol: float):
    """Project psi onto the cone when the violation is roundoff-sized."""

    def guard(y):
        psi = unvec(y[:-1].real, dim)
        lam_min = float(np.linalg.eigvalsh(psi)[0])
        if lam_min >= 0.0:
            return None
        if lam_min <= -10.0 * tol:
            return "reject"
        fixed = y.copy()
        fixed[:-1] = vec(_cone.cone_project(psi))
        return fixed

    return guard


def _domain_guard(p: AdmissibleParams, floor: float = -50.0):
    """Abort when Re<xi_k, psi> drops below the transform-domain floor."""
    sites = []
    if p.m.n_atoms:
        sites.append(vec(p.m.sites))
    if p.mu.n_atoms:
        sites.append(vec(p.mu.sites))
    site_mat = np.vstack(sites) if sites else None

    def guard(y):
        if site_mat is not None:
            re = (site_mat @ y[:-1]).real
            if np.any(re < floor):
                raise DomainBlowup(
                    f"Re<xi, psi> = {float(np.min(re)):.3g} left the transform domain"
                )
        return None

    return guard


def solve_riccati(
    p: AdmissibleParams,
    u0: np.ndarray,
    T: float,
    tol: float = DEFAULT_TOL,
    t_eval=None,
) -> RiccatiSolution:
    """Solve psi' = R(psi), psi(0)=u0 with phi accumulated as an extra state.

    The output grid (default: 65 uniform points on [0, T]) is hit by exact
    integrator steps; values between grid points come from the cubic Hermite
    dense output. Complex u0 switches the solve to the analytic continuation
    with the transform-domain guard instead of the cone safeguard.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    p.require_validated()
    u0 = np.asarray(u0)
    is_complex = np.iscomplexobj(u0)
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 65)
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(t_eval < 0) or np.any(t_eval > T * (1 + 1e-12)):
        raise ValueError("t_eval must lie in [0, T]")

    y0 = _pack(u0.astype(complex) if is_complex else u0.astype(float), 0.0)
    rhs = _riccati_rhs(p)
    guard = _domain_guard(p) if is_complex else _cone_guard(p.dim, tol)
    out_states, knots = _integrate(rhs, y0, T, tol, t_eval, guard)
    psi = unvec(out_states[:, :-1], p.dim)
    phi = out_states[:, -1]
    if not is_complex:
        psi = psi.real
        phi = phi.real
    return RiccatiSolution(
        u0=u0, times=t_eval, psi=psi, phi=phi, tol=tol, dim=p.dim, _knots=knots
    )


def solve_riccati_terminal(p, u0, T, tol=DEFAULT_TOL):
    """(psi(T), phi(T)) without intermediate outputs."""
    sol = solve_riccati(p, u0, T, tol, t_eval=np.array([T]))
    return sol.psi[-1], sol.phi[-1]


def laplace_transition(
    p: AdmissibleParams,
    x: np.ndarray,
    u: np.ndarray,
    t: float,
    tol: float = DEFAULT_TOL,
):
    """Transition Laplace transform exp(-phi(t,u) - <x, psi(t,u)>)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return np.exp(-trace_inner(x, u))
    psi_t, phi_t = solve_riccati_terminal(p, u, t, tol)
    return np.exp(-phi_t - trace_inner(x, psi_t))


def growth_envelope(p: AdmissibleParams, u: np.ndarray) -> tuple[float, float, float]:
    """(C, M, delta) such that |F(psi(s,u))| <= C M^2 e^{-delta s}(||u||+||u||^2).

    C bounds F through its growth inequality; (M, delta) certify the decay of
    the effective linear drift semigroup. The integral tail beyond T is then
    at most C M^2 (||u||+||u||^2) e^{-delta T} / delta.
    """
    _, B_hat = effective_drift(p)
    M, delta = _cone.stability_constants(B_hat)
    return F_growth_constant(p), M, delta


def tail_horizon(C: float, M: float, delta: float, u_norm: float, tail_tol: float) -> float:
    """Horizon T with C M^2 (||u||+||u||^2) e^{-delta T}/delta <= tail_tol."""
    amount = C * M * M * (u_norm + u_norm**2) / (delta * tail_tol)
    if amount <= 1.0:
        return 0.0
    return float(np.log(amount) / delta)
