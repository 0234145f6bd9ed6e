"""Joint affine stochastic covariance model on H x PSD(n).

The outer component Y (a curve, a price factor vector) follows

    dY_t = (A Y_t + G(X_t)) dt + D^{1/2} X_t^{1/2} dW_t,

with affine drift G(x) = g0 + Gamma(x), while the covariance X is a
cone-valued affine process from this package.  The joint Laplace and
Fourier transform is exponential affine:

    E[e^{<Y_t,u1> - <X_t,u2>}]
        = e^{<y0, psi1(t)> - Phi(t) - <x0, psi2(t)>},

where psi1(t) = e^{tA*}u1 and (Phi, psi2) solve a Riccati system whose
right side augments R with the source Gamma*(psi1) + (D^{1/2}psi1)
bilinear-squared.  Tensor squares are bilinear, never sesquilinear: on
the Fourier strip u1 in iH the square is real and negative, which is
what makes the transform well defined; off the strip the evaluation is
an analytic continuation guarded by the transform-domain check.

When n < dim_h the covariance matrix is embedded as the leading n x n
block of H, and test elements are compressed back by taking that block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import cone
from . import riccati
from . import simulate as sim
from .cone import SuperOperator
from .errors import AffineLabError
from .params import AdmissibleParams, params_from_json, params_to_json
from .rng import philox_gen

STATIONARY = "stationary"

_X_SEED_SALT = 0
_X0_SEED_SALT = 0x517CC1B727220A95
_Y_SEED_SALT = 0xD1B54A32D192ED03

_JOINT_KEYS = {"dim_h", "A", "g0", "Gamma", "D", "x_params"}


def pad_state(x: np.ndarray, dim_h: int) -> np.ndarray:
    """Embed an n x n state as the leading block of a dim_h x dim_h one."""
    n = x.shape[-1]
    if n == dim_h:
        return x
    out = np.zeros(x.shape[:-2] + (dim_h, dim_h), dtype=x.dtype)
    out[..., :n, :n] = x
    return out


def crop_test(W: np.ndarray, n: int) -> np.ndarray:
    """Compress a dim_h x dim_h test element to the n x n state block."""
    blk = W[..., :n, :n]
    return 0.5 * (blk + np.swapaxes(blk, -1, -2))


lyapunov_factor = cone.lyapunov_factor


@dataclass
class JointModelSpec:
    """Outer dynamics (A, G, D) coupled to a cone-valued affine process."""

    dim_h: int
    A: np.ndarray
    g0: np.ndarray
    Gamma: np.ndarray            # (dim_h, N) acting on vec coordinates
    D: np.ndarray
    x_params: AdmissibleParams
    D_sqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = int(self.dim_h)
        self.A = np.asarray(self.A, dtype=float)
        self.g0 = np.asarray(self.g0, dtype=float).reshape(d)
        self.Gamma = np.asarray(self.Gamma, dtype=float)
        self.D = cone.sym_element(self.D)
        n = self.x_params.dim
        if n > d:
            raise ValueError(f"covariance rank {n} exceeds outer dimension {d}")
        if self.A.shape != (d, d):
            raise ValueError(f"A must be {d}x{d}")
        N = cone.sym_dim(n)
        if self.Gamma.shape != (d, N):
            raise ValueError(f"Gamma must be {d}x{N} on vec coordinates")
        if self.D.shape != (d, d):
            raise ValueError(f"D must be {d}x{d}")
        lam, Q = np.linalg.eigh(self.D)
        if lam.min() < -1e-10 * max(1.0, lam.max()):
            raise AffineLabError(f"D not PSD (min eigenvalue {lam.min():.3e})")
        root = (Q * np.sqrt(np.clip(lam, 0.0, None))) @ Q.T
        gap = np.max(np.abs(root @ root - self.D))
        if gap > 1e-10 * max(1.0, np.max(np.abs(self.D))):
            raise AffineLabError(f"D^(1/2) squared misses D by {gap:.3e}")
        self.D_sqrt = root

    @property
    def n(self) -> int:
        return self.x_params.dim

    def drift(self, x_vec: np.ndarray) -> np.ndarray:
        """G(x) = g0 + Gamma(x) on vec coordinates; batched over rows."""
        return self.g0 + x_vec @ self.Gamma.T

    def is_bns(self, tol: float = 1e-12) -> bool:
        return (self.x_params.mu.n_atoms == 0
                and np.max(np.abs(self.g0)) <= tol
                and np.max(np.abs(self.Gamma)) <= tol)


def joint_spec_to_json(spec: JointModelSpec) -> dict:
    return {
        "dim_h": spec.dim_h,
        "A": spec.A.tolist(),
        "g0": spec.g0.tolist(),
        "Gamma": spec.Gamma.tolist(),
        "D": spec.D.tolist(),
        "x_params": params_to_json(spec.x_params),
    }


def joint_spec_from_json(doc: dict, validate_now: bool = True) -> JointModelSpec:
    unknown = set(doc) - _JOINT_KEYS
    if unknown:
        raise ValueError(f"unknown joint model keys: {sorted(unknown)}")
    missing = _JOINT_KEYS - set(doc)
    if missing:
        raise ValueError(f"missing joint model keys: {sorted(missing)}")
    return JointModelSpec(
        dim_h=int(doc["dim_h"]),
        A=np.asarray(doc["A"], dtype=float),
        g0=np.asarray(doc["g0"], dtype=float),
        Gamma=np.asarray(doc["Gamma"], dtype=float),
        D=np.asarray(doc["D"], dtype=float),
        x_params=params_from_json(doc["x_params"], validate_now=validate_now),
    )


# ---------------------------------------------------------------------------
# joint Riccati system


class _Semigroup:
    """t -> e^{tM} v with a cached eigenbasis, dense expm fallback."""

    def __init__(self, M: np.ndarray):
        self.M = np.asarray(M, dtype=float)
        lam, V = np.linalg.eig(self.M)
        ok = np.linalg.cond(V) < 1e8
        if ok:
            recon = (V * lam) @ np.linalg.inv(V)
            ok = np.max(np.abs(recon - self.M)) <= 1e-10 * max(1.0, np.abs(lam).max())
        self.ok = bool(ok)
        if self.ok:
            self.lam = lam
            self.V = V
            self.Vinv = np.linalg.inv(V)

    def apply(self, t, v: np.ndarray) -> np.ndarray:
        """e^{tM} v; t scalar or batch (then rows are per-t results)."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if self.ok:
            c = self.Vinv @ v.astype(complex)
            out = (np.exp(np.outer(ts, self.lam)) * c[None, :]) @ self.V.T
            if not np.iscomplexobj(v):
                out = np.real(out)
        else:
            out = np.stack([scipy.linalg.expm(ti * self.M) @ v for ti in ts])
        return out[0] if np.ndim(t) == 0 else out

    def apply_pairs(self, ts: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Rows e^{ts[q] M} vs[q] for matched batches."""
        if self.ok:
            c = vs.astype(complex) @ self.Vinv.T
            out = (np.exp(np.outer(ts, self.lam)) * c) @ self.V.T
            if not np.iscomplexobj(vs):
                out = np.real(out)
            return out
        return np.stack([scipy.linalg.expm(ti * self.M) @ vi
                         for ti, vi in zip(ts, vs)])


@dataclass(frozen=True)
class JointSolution:
    """Output grid values of (Phi, psi1, psi2) for one (u1, u2)."""

    times: np.ndarray
    Phi: np.ndarray              # (K,) complex
    psi1: np.ndarray             # (K, dim_h) complex
    psi2: np.ndarray             # (K, n, n) complex


def _source_terms(spec: JointModelSpec, psi1_of):
    """Riccati source V(t) = Gamma*(psi1) + (D^{1/2}psi1)^{(x)2}/2, cropped."""
    n = spec.n
    Gt = spec.Gamma.T
    Ds = spec.D_sqrt

    def source_vec(t: float):
        h = psi1_of(t)
        w = Ds @ h
        q = crop_test(np.outer(w, w), n)
        return Gt @ h + 0.5 * cone.vec(q), h

    return source_vec


def joint_riccati(spec: JointModelSpec, u1, u2, T: float,
                  tol: float = riccati.DEFAULT_TOL, t_eval=None) -> JointSolution:
    """Solve the joint transform system on [0, T].

    psi1 is the mild (matrix exponential) solution; psi2 and Phi extend
    the scalar-covariance Riccati flow with the psi1-driven source.  A
    real u1 = 0 input delegates to the plain Riccati solver, so those
    outputs agree exactly.
    """
    p = spec.x_params
    p.require_validated()
    n = p.dim
    u1 = np.asarray(u1)
    u2 = np.asarray(u2)
    if u1.shape != (spec.dim_h,):
        raise ValueError(f"u1 must be a length-{spec.dim_h} vector")
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 65)
    t_eval = np.asarray(t_eval, dtype=float)
    semi = _Semigroup(spec.A.T)

    if not np.any(u1):
        sol = riccati.solve_riccati(p, u2, T, tol=tol, t_eval=t_eval)
        K = t_eval.size
        return JointSolution(times=sol.times,
                             Phi=sol.phi.astype(complex),
                             psi1=np.zeros((K, spec.dim_h), dtype=complex),
                             psi2=sol.psi.astype(complex))

    u2c = cone.sym_element(np.asarray(u2, dtype=complex))
    psi1_full = semi.apply(t_eval, u1.astype(complex))
    if T <= 0.0:
        K = t_eval.size
        return JointSolution(times=t_eval, Phi=np.zeros(K, dtype=complex),
                             psi1=psi1_full,
                             psi2=np.broadcast_to(u2c, (K, n, n)).copy())
    base_rhs = riccati._riccati_rhs(p)
    source_vec = _source_terms(spec, lambda t: semi.apply(float(t), u1.astype(complex)))

    def rhs(t, y):
        out = base_rhs(t, y)
        src, h = source_vec(t)
        out[:-1] -= src
        out[-1] -= spec.g0 @ h
        return out

    guard = riccati._domain_guard(p)
    y0 = np.concatenate([cone.vec(u2c), [0.0 + 0.0j]]).astype(complex)
    ys, _ = riccati._integrate(rhs, y0, T, tol, t_eval, guard=guard)
    psi2 = cone.unvec(ys[:, :-1], n)
    return JointSolution(times=t_eval, Phi=ys[:, -1], psi1=psi1_full, psi2=psi2)


def joint_riccati_terminal(spec, u1, u2, T, tol=riccati.DEFAULT_TOL):
    sol = joint_riccati(spec, u1, u2, T, tol=tol, t_eval=np.array([0.0, T]))
    return sol.Phi[-1], sol.psi1[-1], sol.psi2[-1]


def joint_transform(spec: JointModelSpec, x0, u1, u2, t: float,
                    y0=None, tol: float = riccati.DEFAULT_TOL) -> complex:
    """E[e^{<Y_t,u1> - <X_t,u2>}] for a point start or the stationary regime.

    Pass x0 = "stationary" for the covariance started in (and staying
    at) its invariant law; then the e^{-<x0, psi2>} factor becomes the
    invariant Laplace transform evaluated at the complex psi2(t).
    """
    from . import stationary as stat

    Phi, psi1, psi2 = joint_riccati_terminal(spec, u1, u2, t, tol=tol)
    val = np.exp(-Phi)
    if y0 is not None and np.any(y0):
        val *= np.exp(np.asarray(y0) @ psi1)
    if isinstance(x0, str):
        if x0 != STATIONARY:
            raise ValueError(f"unknown regime {x0!r}")
        val *= stat.laplace_invariant(spec.x_params, psi2, tol=tol)
    else:
        x0 = cone.cone_element(x0)
        val *= np.exp(-cone.trace_inner(x0, psi2))
    return complex(val)


# ---------------------------------------------------------------------------
# closed-form BNS transform


def _gl_nodes(a: float, b: float, n_panel: int, order: int = 16):
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panel + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    return nodes, weights


def _bns_psi(spec: JointModelSpec, u1, u2c, s_values: np.ndarray,
             n_panel: int) -> np.ndarray:
    """psi(s) = e^{sB*}u2 - 1/2 int_0^s e^{(s-tau)B*}(D^{1/2}S*(tau)u1)^{(x)2} dtau."""
    p = spec.x_params
    n = p.dim
    Bt = _Semigroup(p.B.matrix.T)
    At = _Semigroup(spec.A.T)
    u2v = cone.vec(u2c)
    out = np.empty((s_values.size, cone.sym_dim(n)), dtype=complex)
    u1c = u1.astype(complex)
    for i, s in enumerate(s_values):
        acc = Bt.apply(float(s), u2v.astype(complex))
        if np.any(u1) and s > 0.0:
            taus, wts = _gl_nodes(0.0, float(s), max(1, n_panel))
            hs = At.apply(taus, u1c)                      # (q, dim_h)
            ws = hs @ spec.D_sqrt.T                       # D^{1/2} S*(tau) u1
            qs = crop_test(ws[:, :, None] * ws[:, None, :], n)
            qv = cone.vec(qs)                             # (q, N)
            kick_rows = Bt.apply_pairs(s - taus, qv)
            acc = acc - 0.5 * (wts @ kick_rows)
        out[i] = acc
    return out


def bns_transform(spec: JointModelSpec, u1, u2, t: float, stationary: bool = False,
                  x0=None, y0=None, tol: float = 1e-9) -> complex:
    """Closed-form transform for the OU (BNS) special case, no ODE solve.

    The exponent integrates F along the explicit psi path; the
    stationary regime appends the infinite-horizon tail at psi(t).
    """
    p = spec.x_params
    if not spec.is_bns():
        raise AffineLabError("bns_transform needs mu empty and zero affine drift")
    p.require_validated()
    u1 = np.asarray(u1)
    u2c = cone.sym_element(np.asarray(u2, dtype=complex))
    Bt_mat = p.B.matrix.T
    M_c, delta = cone.stability_constants(SuperOperator(p.dim, Bt_mat))

    def exponent(n_panel_t: int, n_panel_inner: int) -> complex:
        total = 0.0 + 0.0j
        if t > 0.0:
            s_nodes, s_wts = _gl_nodes(0.0, t, n_panel_t)
            psis = _bns_psi(spec, u1, u2c, s_nodes, n_panel_inner)
            vals = np.array([riccati.F_eval(p, cone.unvec(v, p.dim)) for v in psis])
            total += np.sum(s_wts * vals)
        if stationary:
            psi_t = cone.unvec(
                _bns_psi(spec, u1, u2c, np.array([t]), max(n_panel_inner, 1))[0], p.dim)
            horizon = 40.0 / delta
            Bt = _Semigroup(Bt_mat)
            s2, w2 = _gl_nodes(0.0, horizon, max(8, int(np.ceil(2 * horizon * delta))))
            tails = Bt.apply(s2, cone.vec(psi_t))
            vals2 = np.array([riccati.F_eval(p, cone.unvec(v, p.dim)) for v in tails])
            total += np.sum(w2 * vals2)
        return total

    base = max(2, int(np.ceil(4 * t * delta)) + 2)
    est = exponent(base, base)
    ref = exponent(2 * base, 2 * base)
    if abs(ref - est) > 100 * tol * max(1.0, abs(ref)):
        ref = exponent(4 * base, 4 * base)
    expo = ref

    val = np.exp(-expo)
    if y0 is not None and np.any(y0):
        At = _Semigroup(spec.A.T)
        val *= np.exp(np.asarray(y0, dtype=float)
                      @ At.apply(float(t), u1.astype(complex)))
    if not stationary:
        if x0 is None:
            raise ValueError("point regime needs x0")
        psi_t = cone.unvec(_bns_psi(spec, u1, u2c, np.array([t]), base)[0], p.dim)
        val *= np.exp(-cone.trace_inner(cone.cone_element(x0), psi_t))
    return complex(val)


# ---------------------------------------------------------------------------
# joint simulation


def _psd_sqrt_batch(x: np.ndarray) -> np.ndarray:
    """Matrix square roots of a PSD batch (..., n, n); closed form at n = 2."""
    n = x.shape[-1]
    if n == 2:
        a, b_ = x[..., 0, 0], x[..., 0, 1]
        c = x[..., 1, 1]
        det = np.clip(a * c - b_ * b_, 0.0, None)
        s = np.sqrt(det)
        t = np.sqrt(np.clip(a + c + 2.0 * s, 0.0, None))
        safe = np.where(t > 0.0, t, 1.0)
        out = x.copy()
        out[..., 0, 0] += s
        out[..., 1, 1] += s
        out /= safe[..., None, None]
        return np.where((t > 0.0)[..., None, None], out, 0.0)
    lam, Q = np.linalg.eigh(x)
    root = np.sqrt(np.clip(lam, 0.0, None))
    return np.einsum("...ik,...k,...jk->...ij", Q, root, Q)


def simulate_joint(spec: JointModelSpec, y0, x_init, grid, seed: int,
                   n_paths: int = 1, threads: int | None = None,
                   dt_max: float | None = None, keep=None,
                   block: int = 16384):
    """Sample (Y, X) jointly: X by its exact or thinning scheme, Y by the
    exponential-Euler mild step

        Y_{t+d} = e^{dA}(Y_t + d G(X_t) + D^{1/2} pad(X_t^{1/2}) sqrt(d) Z).

    keep selects the grid times stored in the output (memory control);
    x_init = "stationary" starts every path at an independent draw from
    the invariant law.
    """
    p = spec.x_params
    grid = sim._check_grid(np.asarray(grid, dtype=float))
    if grid[0] != 0.0:
        grid = np.concatenate([[0.0], grid])
    if dt_max is not None and np.max(np.diff(grid)) > dt_max * (1 + 1e-12):
        raise ValueError("grid step exceeds dt_max")
    if keep is None:
        keep_idx = np.arange(grid.size)
    else:
        keep_idx = np.array(sorted({int(np.argmin(np.abs(grid - tk))) for tk in np.asarray(keep, dtype=float)}))
        for tk in np.asarray(keep, dtype=float):
            if np.min(np.abs(grid - tk)) > 1e-9 * max(1.0, tk):
                raise ValueError(f"keep time {tk} not on the grid")
    y0 = np.asarray(y0, dtype=float).reshape(spec.dim_h)

    if isinstance(x_init, str):
        if x_init != STATIONARY:
            raise ValueError(f"unknown x_init {x_init!r}")
        draws = sim.stationary_sampler(p, count=n_paths,
                                       seed=seed ^ _X0_SEED_SALT,
                                       threads=threads)
        x0_all = draws.states
    else:
        x0_all = None
        x_init = cone.cone_element(x_init)

    G_ou = cone.lyapunov_factor(p.B, p.dim) if p.mu.n_atoms == 0 else None
    deltas = np.diff(grid)
    E_steps = [scipy.linalg.expm(d * spec.A) for d in deltas]
    n = p.dim
    K = grid.size

    y_parts = []
    x_parts = []
    for lo in range(0, n_paths, block):
        hi = min(lo + block, n_paths)
        nb = hi - lo
        x_start = x_init if x0_all is None else x0_all[lo:hi]
        if G_ou is not None:
            xs = sim.simulate_ou_exact(G_ou, p.b, p.m, x_start, grid,
                                       seed ^ _X_SEED_SALT, n_paths=nb,
                                       threads=threads, first_path=lo)
        else:
            xs = sim.simulate_affine_thinning(p, x_start, grid,
                                              seed ^ _X_SEED_SALT, n_paths=nb,
                                              threads=threads, first_path=lo)
        Z = np.empty((nb, K - 1, spec.dim_h))
        for j in range(nb):
            Z[j] = philox_gen(seed ^ _Y_SEED_SALT, lo + j).standard_normal((K - 1, spec.dim_h))
        Y = np.empty((nb, K, spec.dim_h))
        Y[:, 0] = y0
        cur = np.broadcast_to(y0, (nb, spec.dim_h)).copy()
        for k, (E, d) in enumerate(zip(E_steps, deltas)):
            xk = xs.states[:, k]
            root = _psd_sqrt_batch(xk)
            noise = np.einsum("ij,pjk,pk->pi", spec.D_sqrt,
                              pad_state(root, spec.dim_h), Z[:, k])
            drift = spec.drift(cone.vec(xk))
            cur = (cur + d * drift + np.sqrt(d) * noise) @ E.T
            Y[:, k + 1] = cur
        y_parts.append(Y[:, keep_idx])
        x_parts.append(xs.states[:, keep_idx])

    y_all = np.concatenate(y_parts, axis=0)
    x_all = np.concatenate(x_parts, axis=0)
    x_sample = sim.PathSample(times=grid[keep_idx], states=x_all, seed=seed,
                              scheme="ou_exact" if G_ou is not None else "thinning")
    return y_all, x_sample
