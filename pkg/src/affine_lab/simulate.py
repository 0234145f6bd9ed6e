"""Trajectory simulation for cone-valued affine processes.

Two schemes:

* ``simulate_ou_exact`` draws the Levy-driven OU case without any
  discretization error: jumps of each atom arrive as a homogeneous
  Poisson process, the inter-jump propagation and the drift integral
  are closed-form, and every term is PSD so paths never leave the cone.

* ``simulate_affine_thinning`` handles state-dependent jump intensity
  by Ogata thinning with a majorant frozen over short steps.  The
  deterministic inter-jump flow (compensators folded into the drift)
  is advanced by exponentiating the augmented affine system, so the
  only approximation is the thinning step cap itself.

Paths are reproducible: path i draws from a Philox substream keyed by
(seed, i), so results are bit-identical for a fixed seed no matter how
many worker threads participate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg

from . import cone
from .cone import SuperOperator
from .errors import AffineLabError, MajorantOverflow, NotSubcritical
from .params import AdmissibleParams, AtomicMeasure, effective_drift, small_jump_compensator
from .rng import philox_gen

_BLOCK = 4096
_RATE_CEILING = 1e9


def default_threads() -> int:
    env = os.environ.get("AFFINE_LAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class PathSample:
    """Simulated ensemble on a common grid; states indexed (path, time)."""

    times: np.ndarray            # (K,)
    states: np.ndarray           # (P, K, n, n)
    seed: int
    scheme: str                  # "ou_exact" | "thinning"

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    def min_eigenvalue(self) -> float:
        flat = self.states.reshape(-1, self.dim, self.dim)
        return float(np.linalg.eigvalsh(flat).min())


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time sample mean and second moment with standard errors."""

    times: np.ndarray
    n_paths: int
    mean: np.ndarray             # (K, n, n)
    second_moment: list          # K SuperOperators on vec coordinates
    se_mean: np.ndarray          # (K, n, n)
    se_second: np.ndarray        # (K, N, N)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a nonempty 1-d array of times")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid times must be nonnegative and strictly increasing")
    return grid


def _run_blocks(one_block, n_paths: int, threads: int | None) -> np.ndarray:
    """Simulate fixed blocks of paths, merged in block order."""
    threads = threads or default_threads()
    starts = list(range(0, n_paths, _BLOCK))
    jobs = [(s, min(s + _BLOCK, n_paths)) for s in starts]
    if threads <= 1 or len(jobs) == 1:
        parts = [one_block(a, b) for a, b in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: one_block(*ab), jobs))
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# exact OU scheme


class _Diagonalized:
    """e^{sG} x e^{sG^T} via one eigenbasis, dense expm fallback."""

    def __init__(self, G: np.ndarray):
        self.G = np.asarray(G, dtype=float)
        lam, V = np.linalg.eig(self.G)
        ok = np.linalg.cond(V) < 1e8
        if ok:
            recon = (V * lam) @ np.linalg.inv(V)
            ok = np.max(np.abs(recon - self.G)) <= 1e-10 * max(1.0, np.abs(lam).max())
        self.ok = bool(ok)
        if self.ok:
            self.lam = lam
            self.V = V
            self.Vinv = np.linalg.inv(V)
            self.phase = lam[:, None] + lam[None, :]

    def conjugate(self, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Batch of e^{s_j G} x_j e^{s_j G^T} for matched arrays."""
        if self.ok:
            xt = self.Vinv @ x @ self.Vinv.T
            ph = np.exp(s[:, None, None] * self.phase[None, :, :])
            out = self.V @ (ph * xt) @ self.V.T
            return np.real(out)
        return np.stack([
            (E := scipy.linalg.expm(si * self.G)) @ xi @ E.T
            for si, xi in zip(s, x)
        ])

    def drift_integral(self, delta: float, b_c: np.ndarray) -> np.ndarray:
        """int_0^delta e^{sG} b_c e^{sG^T} ds, exact."""
        if self.ok:
            bt = self.Vinv @ b_c.astype(complex) @ self.Vinv.T
            ph = self.phase
            small = np.abs(ph) < 1e-12
            factor = np.where(small, delta, np.expm1(np.where(small, 1.0, ph) * delta)
                              / np.where(small, 1.0, ph))
            out = np.real(self.V @ (factor * bt) @ self.V.T)
            return 0.5 * (out + out.T)
        # Simpson fallback on a fine grid
        s = np.linspace(0.0, delta, 257)
        vals = self.conjugate(s, np.broadcast_to(b_c, (s.size, *b_c.shape)))
        return scipy.integrate.simpson(vals, x=s, axis=0)


def _initial_states(x0, n: int):
    """Single (n, n) start or per-path (P, n, n) batch, both cone-checked."""
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 2:
        return cone.cone_element(x0), None
    if x0.ndim == 3 and x0.shape[1:] == (n, n):
        sym_gap = np.max(np.abs(x0 - np.swapaxes(x0, -1, -2)))
        if sym_gap > 1e-10 * (1.0 + np.max(np.abs(x0))):
            raise AffineLabError(f"initial states not symmetric (gap {sym_gap:.3e})")
        return None, cone.cone_project_batch(0.5 * (x0 + np.swapaxes(x0, -1, -2)))
    raise ValueError(f"x0 must be (n, n) or (P, n, n) with n={n}")


def simulate_ou_exact(G, b, m: AtomicMeasure, x0, grid, seed: int,
                      n_paths: int = 1, threads: int | None = None,
                      first_path: int = 0) -> PathSample:
    """Exact sampling of the OU process dX = (GX + XG^T) dt + dL.

    Variation of constants makes the solution linear in the inputs, so a
    path costs one Poisson draw plus one propagated kick per jump rather
    than one step per grid time:

        X_t = e^{tG} x0 e^{tG^T} + int_0^t e^{sG} b_c e^{sG^T} ds
              + sum_{tau_j <= t} e^{(t-tau_j)G} xi_j e^{(t-tau_j)G^T}.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    b = cone.sym_element(b)
    x0_single, x0_batch = _initial_states(x0, n)
    if x0_batch is not None and x0_batch.shape[0] != n_paths:
        raise ValueError("per-path x0 batch must have n_paths entries")
    grid = _check_grid(grid)
    b_c = b - small_jump_compensator(m)
    lam_min = np.linalg.eigvalsh(b_c).min()
    if lam_min < -cone.TOL_PSD:
        raise AffineLabError(
            f"drift condition violated: b - I_m has eigenvalue {lam_min:.3e}")
    prop = _Diagonalized(G)
    K = grid.size
    T_end = float(grid[-1])
    E_list = [scipy.linalg.expm(t * G) for t in grid]
    J_list = [prop.drift_integral(t, b_c) for t in grid]
    det_shared = None
    if x0_batch is None:
        det_shared = np.stack([E @ x0_single @ E.T + J
                               for E, J in zip(E_list, J_list)])
    weights = m.weights if m.n_atoms else np.zeros(0)
    sites = m.sites if m.n_atoms else np.zeros((0, n, n))
    if prop.ok and weights.size:
        site_diag = prop.Vinv @ sites @ prop.Vinv.T

    def one_block(lo: int, hi: int) -> np.ndarray:
        out = np.empty((hi - lo, K, n, n))
        if det_shared is not None:
            out[:] = det_shared[None]
        else:
            xb = x0_batch[lo:hi]
            for i, (E, J) in enumerate(zip(E_list, J_list)):
                out[:, i] = E @ xb @ E.T + J
        for path in range(lo, hi):
            if not weights.size:
                break
            gen = philox_gen(seed, first_path + path)
            counts = gen.poisson(weights * T_end)
            total = int(counts.sum())
            if not total:
                continue
            taus = gen.uniform(0.0, T_end, size=total)
            which = np.repeat(np.arange(weights.size), counts)
            row = out[path - lo]
            offs = grid[:, None] - taus[None, :]
            mask = offs >= 0.0
            if prop.ok:
                # chunk the kick sum over jumps to bound the temporary
                offs_c = np.where(mask, offs, 0.0)
                for j0 in range(0, total, 64):
                    j1 = min(j0 + 64, total)
                    ph = np.exp(offs_c[:, j0:j1, None, None] * prop.phase)
                    ph *= mask[:, j0:j1, None, None]
                    S = (ph * site_diag[which[j0:j1]][None]).sum(axis=1)
                    row += np.real(prop.V @ S @ prop.V.T)
            else:
                for j in range(total):
                    for i in np.nonzero(mask[:, j])[0]:
                        E = scipy.linalg.expm(offs[i, j] * G)
                        row[i] += E @ sites[which[j]] @ E.T
        out += np.swapaxes(out, -1, -2).copy()
        out *= 0.5
        return out

    states = _run_blocks(one_block, n_paths, threads)
    return PathSample(times=grid, states=states, seed=seed, scheme="ou_exact")


# ---------------------------------------------------------------------------
# thinning scheme for state-dependent jumps


class _AffineFlow:
    """Flow of x' = b_c + C(x) advanced by the augmented matrix exponential."""

    def __init__(self, C: np.ndarray, b_vec: np.ndarray):
        N = b_vec.size
        self.N = N
        self.linear_only = not np.any(b_vec)
        aug = np.zeros((N + 1, N + 1))
        aug[:N, :N] = C
        aug[:N, N] = b_vec
        self.aug = aug
        self.C = C
        self.b_vec = b_vec
        if not np.any(C):
            self.mode = "drift"
            return
        lam, V = np.linalg.eig(aug)
        ok = np.linalg.cond(V) < 1e8
        if ok:
            recon = (V * lam) @ np.linalg.inv(V)
            scale = max(1.0, np.abs(lam).max())
            ok = np.max(np.abs(recon - aug)) <= 1e-10 * scale
        if ok:
            self.mode = "eig"
            self.lam = lam
            self.V = V
            self.Vinv = np.linalg.inv(V)
        else:
            self.mode = "expm"

    def advance(self, v: np.ndarray, h: float) -> np.ndarray:
        if h == 0.0:
            return v
        if self.mode == "drift":
            return v + h * self.b_vec
        w = np.append(v, 1.0)
        if self.mode == "eig":
            out = self.V @ (np.exp(h * self.lam) * (self.Vinv @ w))
            out = np.real(out)
        else:
            out = scipy.linalg.expm(h * self.aug) @ w
        return out[:self.N]


def _thinning_setup(p: AdmissibleParams):
    n = p.dim
    b_c = p.b - small_jump_compensator(p.m)
    C = p.B.matrix.copy()
    mu_sites, mu_mvecs = [], []
    if p.mu.n_atoms:
        for M, xi in zip(p.mu.masses, p.mu.sites):
            m_vec = cone.vec(M) / float(np.sum(xi * xi))
            chi = xi if np.sqrt(np.sum(xi * xi)) <= 1.0 else np.zeros_like(xi)
            C -= np.outer(cone.vec(chi), m_vec)
            mu_sites.append(cone.vec(xi))
            mu_mvecs.append(m_vec)
    w = p.m.weights if p.m.n_atoms else np.zeros(0)
    m_sites = [cone.vec(xi) for xi in p.m.sites] if p.m.n_atoms else []
    flow = _AffineFlow(C, cone.vec(b_c))
    norm_C = np.linalg.norm(C, 2)
    norm_b = float(np.linalg.norm(cone.vec(b_c)))
    Q = np.sum(mu_mvecs, axis=0) if mu_mvecs else np.zeros(cone.sym_dim(n))
    return flow, w, m_sites, mu_sites, np.array(mu_mvecs), norm_C, norm_b, Q


def simulate_affine_thinning(p: AdmissibleParams, x0, grid, seed: int,
                             dt_max: float | None = None, n_paths: int = 1,
                             threads: int | None = None,
                             first_path: int = 0) -> PathSample:
    """Thinning-based sampling of the general validated affine process."""
    p.require_validated()
    x0_single, x0_batch = _initial_states(x0, p.dim)
    if x0_batch is not None and x0_batch.shape[0] != n_paths:
        raise ValueError("per-path x0 batch must have n_paths entries")
    grid = _check_grid(grid)
    if dt_max is None:
        _, B_hat = effective_drift(p)
        try:
            _, delta = cone.stability_constants(B_hat)
        except NotSubcritical as exc:
            raise NotSubcritical(
                "default dt_max needs a subcritical drift; pass dt_max explicitly"
            ) from exc
        dt_max = 0.01 / delta
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")

    flow, w, m_sites, mu_sites, mu_mvecs, norm_C, norm_b, Q = _thinning_setup(p)
    n = p.dim
    w_tot = float(w.sum()) if w.size else 0.0
    has_mu = len(mu_sites) > 0
    times = grid if grid[0] == 0.0 else np.concatenate([[0.0], grid])

    def one_block(lo: int, hi: int) -> np.ndarray:
        out = np.empty((hi - lo, grid.size, n, n))
        for path in range(lo, hi):
            gen = philox_gen(seed, first_path + path)
            start = x0_single if x0_batch is None else x0_batch[path]
            v = cone.vec(start)
            row = 0
            if grid[0] == 0.0:
                out[path - lo, 0] = start
                row = 1
            t = 0.0
            for t_next in times[1:] if times[0] == 0.0 else times:
                while t < t_next:
                    h = min(dt_max, t_next - t)
                    # majorant for the total intensity over [t, t+h]
                    lam_bar = w_tot
                    if has_mu:
                        alpha = max(0.0, float(Q @ v))
                        x_norm = float(np.linalg.norm(v))
                        growth = (norm_b + norm_C * (x_norm + h * norm_b)
                                  * np.exp(h * norm_C)) * float(np.linalg.norm(Q))
                        lam_bar += alpha + h * max(0.0, growth)
                    if lam_bar > _RATE_CEILING:
                        raise MajorantOverflow(
                            f"thinning majorant {lam_bar:.3e} exceeds {_RATE_CEILING:.0e}")
                    if lam_bar <= 0.0:
                        v = flow.advance(v, h)
                        t += h
                        continue
                    # candidate stream within the frozen-majorant segment
                    tau = 0.0
                    jumped = False
                    while True:
                        tau_next = tau + gen.exponential(1.0 / lam_bar)
                        if tau_next >= h:
                            v = flow.advance(v, h - tau)
                            t += h
                            break
                        v = flow.advance(v, tau_next - tau)
                        tau = tau_next
                        # true rates at the candidate time
                        rates = []
                        if w.size:
                            rates.extend(w)
                        if has_mu:
                            vals = mu_mvecs @ v
                            rates.extend(np.maximum(vals, 0.0))
                        rates = np.asarray(rates)
                        r_tot = rates.sum()
                        ucand = gen.uniform()
                        if ucand * lam_bar < r_tot:
                            k = int(np.searchsorted(np.cumsum(rates), ucand * lam_bar))
                            k = min(k, rates.size - 1)
                            site = m_sites[k] if k < len(m_sites) else mu_sites[k - len(m_sites)]
                            v = v + site
                            t += tau
                            jumped = True
                            break
                    if jumped:
                        continue
                x = cone.unvec(v, n)
                x = cone.cone_project(0.5 * (x + x.T))
                v = cone.vec(x)
                out[path - lo, row] = x
                row += 1
        return out

    states = _run_blocks(one_block, n_paths, threads)
    return PathSample(times=grid, states=states, seed=seed, scheme="thinning")


# ---------------------------------------------------------------------------
# stationary sampling and ensemble statistics


@dataclass(frozen=True)
class StationarySample:
    """Approximate draws from the invariant law with a bias certificate."""

    states: np.ndarray           # (count, n, n)
    bias_bound: float
    burn_in: float
    thin: float
    seed: int


def _ou_stationary_exact(p: AdmissibleParams, G: np.ndarray, count: int,
                         seed: int, threads: int | None,
                         horizon_mult: float = 40.0):
    """Horizon-truncated draws of int_0^inf e^{sG} dL_s e^{sG^T}.

    The truncated integral has the law of X_H started at 0, so the
    Wasserstein theorem bound at t = H certifies the (negligible) bias.
    """
    _, delta = cone.stability_constants(cone.lyapunov_superop(G))
    H = horizon_mult / delta
    sample = simulate_ou_exact(G, p.b, p.m, np.zeros((p.dim, p.dim)),
                               np.array([H]), seed, n_paths=count,
                               threads=threads)
    return sample.states[:, 0], H


def stationary_sampler(p: AdmissibleParams, burn_in: float | None = None,
                       thin: float | None = None, count: int = 1024,
                       seed: int = 0, threads: int | None = None,
                       max_chains: int = 512) -> StationarySample:
    """Draws from the invariant law.

    The Levy-OU case (no state-dependent atoms, Lyapunov-type drift) is
    sampled exactly from the stationary stochastic integral; otherwise
    long thinning chains are started at the stationary mean and
    subsampled every `thin` time units.
    """
    from . import stationary as stat

    p.require_validated()
    law = stat.invariant_law(p)
    G = cone.lyapunov_factor(p.B, p.dim) if p.mu.n_atoms == 0 else None
    if G is not None:
        states, H = _ou_stationary_exact(p, G, count, seed, threads)
        bias = stat.wasserstein_bound(law, np.zeros((p.dim, p.dim)), 2.0, H)
        return StationarySample(states=states, bias_bound=bias, burn_in=H,
                                thin=0.0, seed=seed)
    if burn_in is None:
        burn_in = 12.0 / law.delta
    if thin is None:
        thin = 5.0 / law.delta
    n_chains = min(count, max_chains)
    per_chain = -(-count // n_chains)
    grid = burn_in + thin * np.arange(per_chain)
    x0 = cone.cone_project(law.mean)
    sample = simulate_affine_thinning(p, x0, grid, seed, n_paths=n_chains,
                                      threads=threads)
    states = sample.states.reshape(-1, p.dim, p.dim)[:count]
    bias = stat.wasserstein_bound(law, x0, 2.0, burn_in)
    return StationarySample(states=states, bias_bound=bias, burn_in=burn_in,
                            thin=thin, seed=seed)


def ensemble_stats(paths: PathSample | list) -> EnsembleStats:
    """Sample mean and second-moment operator per grid time, with ses."""
    if isinstance(paths, PathSample):
        samples = [paths]
    else:
        samples = list(paths)
        if not samples:
            raise ValueError("no paths given")
    t0 = samples[0].times
    for s in samples[1:]:
        if s.times.shape != t0.shape or not np.array_equal(s.times, t0):
            raise AffineLabError("ensemble_stats requires a common time grid")
    states = np.concatenate([s.states for s in samples], axis=0)
    P, K, n, _ = states.shape
    N = cone.sym_dim(n)

    mean = states.mean(axis=0)
    se_mean = states.std(axis=0, ddof=1) / np.sqrt(P) if P > 1 else np.zeros_like(mean)

    vecs = cone.vec(states)                      # (P, K, N)
    outers = np.einsum("pki,pkj->pkij", vecs, vecs)
    second = outers.mean(axis=0)
    se_second = (outers.std(axis=0, ddof=1) / np.sqrt(P)
                 if P > 1 else np.zeros_like(second))
    ops = [SuperOperator(n, second[k]) for k in range(K)]
    return EnsembleStats(times=t0, n_paths=P, mean=mean, second_moment=ops,
                         se_mean=se_mean, se_second=se_second)
