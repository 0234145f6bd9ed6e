"""Forward-curve pricing on a reproducing-kernel curve space.

Curves live in the Hilbert space with inner product

    <f, g> = f(0) g(0) + int_0^inf e^{beta x} f'(x) g'(x) dx,

where point evaluation is a continuous functional represented by
u_t(x) = 1 + int_0^{x and t} e^{-beta s} ds, so <f, u_t> = f(t) and
<u_s, u_t> = 1 + (1 - e^{-beta (s and t)}) / beta.  A finite anchor set
spans the working subspace; Cholesky-orthonormalized coordinates make
the evaluators explicit columns and keep every operation a small dense
linear-algebra step.

The forward price for delivery at T_hat seen at time T is
exp(<Y_T, u_{T_hat - T}>) with Y the curve state of the joint
stochastic covariance model.  Calls on the forward are priced either by
damped Fourier inversion of the exponential-affine transform or by
Monte Carlo; forward-start options condition on the covariance state at
the start date and reuse one frozen set of transform nodes across all
draws, which reduces each draw to a matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats

from . import cone
from . import covariance as jm
from . import simulate as sim
from .errors import AffineLabError, DomainBlowup, PriceOutOfBounds
from .params import params_from_json, params_to_json

DEFAULT_ALPHA = 1.5
IV_BRACKET = (1e-8, 6.0)

_MODEL_KEYS = {"beta", "anchors", "x0"} | jm._JOINT_KEYS


# ---------------------------------------------------------------------------
# curve space


def kernel_eval(beta: float, s: float, t: float) -> float:
    """Reproducing kernel 1 + (1 - e^{-beta (s and t)}) / beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if s < 0 or t < 0:
        raise ValueError("kernel arguments must be nonnegative")
    return 1.0 + (1.0 - np.exp(-beta * min(s, t))) / beta


@dataclass(frozen=True)
class FilipovicSpace:
    """Anchor-spanned curve subspace with orthonormalized coordinates."""

    beta: float
    anchors: np.ndarray          # (d,), 0 = x_1 < ... < x_d
    gram: np.ndarray             # (d, d)
    chol: np.ndarray             # (d, d) lower triangular

    @property
    def dim(self) -> int:
        return self.anchors.size


def make_space(beta: float, anchors) -> FilipovicSpace:
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim != 1 or anchors.size < 1:
        raise ValueError("anchors must be a nonempty 1-d array")
    if anchors[0] != 0.0 or np.any(np.diff(anchors) <= 0):
        raise ValueError("anchors must start at 0 and increase strictly")
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = anchors.size
    mins = np.minimum(anchors[:, None], anchors[None, :])
    gram = 1.0 + (1.0 - np.exp(-beta * mins)) / beta
    chol = np.linalg.cholesky(gram)
    return FilipovicSpace(beta=float(beta), anchors=anchors, gram=gram, chol=chol)


def eval_vector(space: FilipovicSpace, t: float) -> np.ndarray:
    """Coordinates of the point evaluator u_t in the orthonormal basis.

    Within the anchor span this is the orthogonal projection of u_t; for
    t past the last anchor the kernel saturates, so the result is exact.
    """
    if t < 0:
        raise ValueError("evaluation time must be nonnegative")
    k_t = 1.0 + (1.0 - np.exp(-space.beta * np.minimum(t, space.anchors))) / space.beta
    return scipy.linalg.solve_triangular(space.chol, k_t, lower=True)


def shift_matrix(space: FilipovicSpace, tau: float) -> np.ndarray:
    """Matrix carrying eval_vector(x_j) to eval_vector(x_j + tau).

    The anchor evaluators form a basis of the span, so the defining
    conditions determine the matrix exactly; the truncation error lives
    in applying it to non-anchor evaluators and is measured by
    shift_defect.
    """
    if tau < 0:
        raise ValueError("shift must be nonnegative")
    targets = np.column_stack([eval_vector(space, x + tau) for x in space.anchors])
    return scipy.linalg.solve_triangular(space.chol, targets.T, lower=True).T


def shift_defect(space: FilipovicSpace, tau: float, t_grid=None) -> float:
    """Worst-case norm error of the shift on off-anchor evaluators."""
    if t_grid is None:
        x = space.anchors
        t_grid = np.unique(np.concatenate([x, 0.5 * (x[:-1] + x[1:]),
                                           [x[-1] + tau, x[-1] + 2 * tau]]))
    S = shift_matrix(space, tau)
    worst = 0.0
    for t in np.asarray(t_grid, dtype=float):
        gap = S @ eval_vector(space, t) - eval_vector(space, t + tau)
        worst = max(worst, float(np.linalg.norm(gap)))
    return worst


def shift_generator(space: FilipovicSpace) -> np.ndarray:
    """Curve-side drift matrix generating the projected shift flow.

    The adjoint generator acts on evaluators as the one-sided derivative
    of tau -> e(x_j + tau); past the last anchor the kernel saturates,
    so the final evaluator is a fixed point of the flow.  The returned
    state-side matrix is its transpose.  Finite shift matrices can be
    singular under saturation, which rules out a matrix-logarithm
    construction; the differential route has no such defect.
    """
    x = space.anchors
    d = space.dim
    k_prime = np.zeros((d, d))
    for i in range(d):
        k_prime[:, i] = np.exp(-space.beta * x[i]) * (x > x[i])
    M = scipy.linalg.solve_triangular(space.chol, k_prime, lower=True)
    return scipy.linalg.solve_triangular(space.chol, M.T, lower=True)


@dataclass(frozen=True)
class ForwardCurve:
    """A curve in the anchor span, stored by orthonormal coordinates."""

    space: FilipovicSpace
    coords: np.ndarray

    def value(self, t: float) -> float:
        return float(self.coords @ eval_vector(self.space, t))

    def at_anchors(self) -> np.ndarray:
        return self.space.chol @ self.coords


def curve_from_values(space: FilipovicSpace, values) -> ForwardCurve:
    """Interpolating span curve through given anchor values."""
    values = np.asarray(values, dtype=float)
    if values.shape != (space.dim,):
        raise ValueError(f"need one value per anchor ({space.dim})")
    coords = scipy.linalg.solve_triangular(space.chol, values, lower=True)
    return ForwardCurve(space=space, coords=coords)


def forward_price(y: ForwardCurve, T: float, T_hat: float) -> float:
    """exp of the time-T curve evaluated at time to delivery T_hat - T."""
    if not 0 <= T <= T_hat:
        raise ValueError("need 0 <= T <= T_hat")
    return float(np.exp(y.value(T_hat - T)))


# ---------------------------------------------------------------------------
# Black-76


def black76_call(F: float, K: float, T: float, r: float, sigma: float) -> float:
    if F <= 0 or K <= 0:
        raise ValueError("forward and strike must be positive")
    if T < 0 or sigma < 0:
        raise ValueError("maturity and volatility must be nonnegative")
    disc = np.exp(-r * T)
    root = sigma * np.sqrt(T)
    if root == 0.0:
        return disc * max(F - K, 0.0)
    d1 = (np.log(F / K) + 0.5 * root * root) / root
    d2 = d1 - root
    N = scipy.stats.norm.cdf
    return float(disc * (F * N(d1) - K * N(d2)))


def black76_vega(F: float, K: float, T: float, r: float, sigma: float) -> float:
    root = sigma * np.sqrt(T)
    if root == 0.0:
        return 0.0
    d1 = (np.log(F / K) + 0.5 * root * root) / root
    return float(np.exp(-r * T) * F * scipy.stats.norm.pdf(d1) * np.sqrt(T))


def implied_vol(price: float, F: float, K: float, T: float, r: float) -> float:
    """Black-76 volatility repricing a call, by Brent root finding."""
    disc = np.exp(-r * T)
    lower = disc * max(F - K, 0.0)
    upper = disc * F
    if not lower < price < upper:
        raise PriceOutOfBounds(
            f"price {price:.6e} outside the arbitrage interval "
            f"({lower:.6e}, {upper:.6e})")

    def gap(s):
        return black76_call(F, K, T, r, s) - price

    lo, hi = IV_BRACKET
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e3:
            raise PriceOutOfBounds("no volatility reprices the given price")
    root = scipy.optimize.brentq(gap, lo, hi, xtol=1e-12, rtol=8.9e-16)
    if abs(gap(root)) > 1e-10:
        raise AffineLabError("implied volatility root did not converge")
    return float(root)


# ---------------------------------------------------------------------------
# model assembly


@dataclass
class PricingModel:
    """Curve space plus joint dynamics, with the point-start state."""

    space: FilipovicSpace
    joint: jm.JointModelSpec
    x0: np.ndarray

    def __post_init__(self):
        if self.joint.dim_h != self.space.dim:
            raise ValueError("joint model dimension must match the anchor count")
        self.x0 = cone.cone_element(self.x0)
        if self.x0.shape[0] != self.joint.n:
            raise ValueError("x0 must match the covariance rank")


def risk_neutral_drift(space: FilipovicSpace, D, n: int):
    """(g0, Gamma) removing the forward drift at every anchor evaluator.

    The exponential forward is a martingale iff the curve drift cancels
    half the quadratic variation of the log forward; imposing this at
    the d anchor evaluators (a basis of the span) gives g0 = 0 and a
    triangular solve for Gamma.  Off-anchor evaluators satisfy it up to
    the span truncation, which the tests measure empirically.
    """
    D = cone.sym_element(D)
    d = space.dim
    N = cone.sym_dim(n)
    Q = np.empty((d, N))
    for j in range(d):
        u = space.chol.T[:, j]              # eval_vector at anchor j
        wv = _d_sqrt(D) @ u
        Q[j] = cone.vec(jm.crop_test(np.outer(wv, wv), n))
    Gamma = -0.5 * scipy.linalg.solve_triangular(space.chol, Q, lower=True)
    return np.zeros(d), Gamma


def _d_sqrt(D: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(D)
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


def build_forward_model(space: FilipovicSpace, D, x_params, x0) -> PricingModel:
    """Assemble the risk-neutral forward model over the given curve space."""
    A = shift_generator(space)
    g0, Gamma = risk_neutral_drift(space, D, x_params.dim)
    joint = jm.JointModelSpec(dim_h=space.dim, A=A, g0=g0, Gamma=Gamma,
                              D=D, x_params=x_params)
    return PricingModel(space=space, joint=joint, x0=x0)


def model_to_json(model: PricingModel) -> dict:
    """Covariance-model document extended with the curve data (flat keys)."""
    doc = jm.joint_spec_to_json(model.joint)
    doc["beta"] = model.space.beta
    doc["anchors"] = model.space.anchors.tolist()
    doc["x0"] = model.x0.tolist()
    return doc


def model_from_json(doc: dict, validate_now: bool = True) -> PricingModel:
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ValueError(f"unknown pricing model keys: {sorted(unknown)}")
    missing = _MODEL_KEYS - set(doc)
    if missing:
        raise ValueError(f"missing pricing model keys: {sorted(missing)}")
    space = make_space(float(doc["beta"]), doc["anchors"])
    rest = {k: doc[k] for k in doc if k not in ("beta", "anchors", "x0")}
    joint = jm.joint_spec_from_json(rest, validate_now=validate_now)
    return PricingModel(space=space, joint=joint,
                        x0=np.asarray(doc["x0"], dtype=float))


# ---------------------------------------------------------------------------
# Fourier pricing


def _cm_weight(v: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * alpha + alpha - v * v + 1j * v * (2 * alpha + 1)


@dataclass
class TransformNodes:
    """Frozen quadrature nodes for one (T, T_hat, alpha) transform slice.

    Phi and psi2 hold the Riccati outputs at z_j = v_j - i (alpha + 1),
    so the conditional characteristic value for a start x is
    exp(-Phi_j - <x, psi2_j>); pricing any number of draws and strikes
    reuses them through one matrix product.
    """

    T: float
    T_hat: float
    alpha: float
    v: np.ndarray                # (J,)
    w: np.ndarray                # (J,)
    Phi: np.ndarray              # (J,) complex
    psi2: np.ndarray             # (J, N) complex, vec coordinates
    panel_edges: np.ndarray
    tol: float
    stat_cf: dict = field(default_factory=dict, repr=False, compare=False)

    def cf_matrix(self, x_vecs: np.ndarray) -> np.ndarray:
        """exp(-Phi_j - <x_i, psi2_j>) for a batch of start states."""
        return np.exp(-self.Phi[None, :] - x_vecs @ self.psi2.T)

    def price_rows(self, cf: np.ndarray, log_strike: float) -> np.ndarray:
        """Damped-inversion prices per row of a cf matrix."""
        kern = np.exp(-1j * self.v * log_strike) / _cm_weight(self.v, self.alpha)
        vals = (cf * kern[None, :]).real @ self.w
        return np.exp(-self.alpha * log_strike) / np.pi * vals

    def tail_fraction(self, cf: np.ndarray) -> float:
        """Largest relative weight of the final panel across rows."""
        last = self.panel_edges[-2]
        mask = self.v >= last
        kern = np.abs(self.w / _cm_weight(self.v, self.alpha))
        tail = np.abs(cf[:, mask]) @ kern[mask]
        total = np.abs(cf) @ kern
        return float(np.max(tail / np.maximum(total, 1e-300)))


def _transform_slice(model: PricingModel, z_values: np.ndarray, T: float,
                     T_hat: float, tol: float):
    """Riccati outputs (Phi, psi2) at u1 = i z u_{T_hat - T}, u2 = 0."""
    e_vec = eval_vector(model.space, T_hat - T)
    n = model.joint.n
    Phi = np.empty(z_values.size, dtype=complex)
    psi2 = np.empty((z_values.size, cone.sym_dim(n)), dtype=complex)
    for j, z in enumerate(z_values):
        ph, _, ps = jm.joint_riccati_terminal(
            model.joint, 1j * z * e_vec, np.zeros((n, n)), T, tol=tol)
        Phi[j] = ph
        psi2[j] = cone.vec(ps)
    return Phi, psi2


def transform_nodes(model: PricingModel, T: float, T_hat: float,
                    alpha: float = DEFAULT_ALPHA, tol: float = 1e-8,
                    panel_width: float = 16.0, order: int = 24,
                    max_panels: int = 96) -> TransformNodes:
    """Build the frozen Carr-Madan node set, extending panels until the
    stationary-regime integrand tail falls below tol."""
    from . import stationary as stat

    glx, glw = np.polynomial.legendre.leggauss(order)
    law = stat.invariant_law(model.joint.x_params)
    xbar = cone.vec(cone.cone_project(law.mean))

    edges = [0.0]
    v_all, w_all = [], []
    Phi_all, psi2_all = [], []
    total = None
    while len(edges) - 1 < max_panels:
        a = edges[-1]
        b = a + panel_width
        v = 0.5 * (a + b) + 0.5 * panel_width * glx
        w = 0.5 * panel_width * glw
        Phi, psi2 = _transform_slice(model, v - 1j * (alpha + 1.0), T, T_hat, tol)
        edges.append(b)
        v_all.append(v)
        w_all.append(w)
        Phi_all.append(Phi)
        psi2_all.append(psi2)
        # magnitude at the stationary mean decides truncation
        cf = np.exp(-Phi - psi2 @ xbar)
        contrib = np.abs(cf / _cm_weight(v, alpha)) @ w
        total = contrib if total is None else total + contrib
        if contrib <= tol * max(total, 1.0) and len(edges) > 2:
            break
    return TransformNodes(T=T, T_hat=T_hat, alpha=alpha,
                          v=np.concatenate(v_all), w=np.concatenate(w_all),
                          Phi=np.concatenate(Phi_all),
                          psi2=np.concatenate(psi2_all, axis=0),
                          panel_edges=np.asarray(edges), tol=tol)


def _extend_nodes(model: PricingModel, nodes: TransformNodes,
                  extra_panels: int, order: int = 24) -> TransformNodes:
    glx, glw = np.polynomial.legendre.leggauss(order)
    width = nodes.panel_edges[-1] - nodes.panel_edges[-2]
    edges = list(nodes.panel_edges)
    v_all, w_all = [nodes.v], [nodes.w]
    Phi_all, psi2_all = [nodes.Phi], [nodes.psi2]
    for _ in range(extra_panels):
        a = edges[-1]
        v = a + 0.5 * width + 0.5 * width * glx
        w = 0.5 * width * glw
        Phi, psi2 = _transform_slice(model, v - 1j * (nodes.alpha + 1.0),
                                     nodes.T, nodes.T_hat, nodes.tol)
        edges.append(a + width)
        v_all.append(v)
        w_all.append(w)
        Phi_all.append(Phi)
        psi2_all.append(psi2)
    return TransformNodes(T=nodes.T, T_hat=nodes.T_hat, alpha=nodes.alpha,
                          v=np.concatenate(v_all), w=np.concatenate(w_all),
                          Phi=np.concatenate(Phi_all),
                          psi2=np.concatenate(psi2_all, axis=0),
                          panel_edges=np.asarray(edges), tol=nodes.tol)


def _stationary_cf_row(model: PricingModel, nodes: TransformNodes,
                       tol: float) -> np.ndarray:
    """Characteristic values under the invariant covariance regime.

    One Riccati solve per node, so the row is cached on the node set.
    """
    from . import stationary as stat

    if tol in nodes.stat_cf:
        return nodes.stat_cf[tol]
    p = model.joint.x_params
    n = p.dim
    out = np.empty(nodes.v.size, dtype=complex)
    for j in range(nodes.v.size):
        lap = stat.laplace_invariant(p, cone.unvec(nodes.psi2[j], n), tol=tol)
        out[j] = np.exp(-nodes.Phi[j]) * lap
    nodes.stat_cf[tol] = out[None, :]
    return nodes.stat_cf[tol]


def price_call_on_forward(model: PricingModel, T: float, T_hat: float,
                          K: float, regime, method: str = "fourier",
                          alpha: float = DEFAULT_ALPHA, tol: float = 1e-8,
                          n_paths: int = 100_000, n_steps: int = 200,
                          seed: int = 0, threads: int | None = None,
                          nodes: TransformNodes | None = None):
    """European call on the forward, strike K in price units.

    regime is either the string "stationary" or a pair (x0, y0); method
    "fourier" returns (price, None), "mc" returns (price, se).
    """
    if not 0 <= T <= T_hat:
        raise ValueError("need 0 <= T <= T_hat")
    if K <= 0:
        raise ValueError("strike must be positive")
    stationary_regime = isinstance(regime, str)
    if stationary_regime:
        if regime != jm.STATIONARY:
            raise ValueError(f"unknown regime {regime!r}")
        x0, y0 = None, np.zeros(model.space.dim)
    else:
        x0, y0 = regime
        x0 = cone.cone_element(x0)
        y0 = np.zeros(model.space.dim) if y0 is None else np.asarray(y0, dtype=float)

    if method == "mc":
        grid = np.linspace(0.0, T, n_steps + 1) if T > 0 else np.array([0.0])
        Y, _ = jm.simulate_joint(model.joint, y0,
                                 jm.STATIONARY if stationary_regime else x0,
                                 grid, seed, n_paths=n_paths, threads=threads,
                                 keep=[T])
        e_vec = eval_vector(model.space, T_hat - T)
        payoff = np.maximum(np.exp(Y[:, -1] @ e_vec) - K, 0.0)
        return float(payoff.mean()), float(payoff.std(ddof=1) / np.sqrt(n_paths))
    if method != "fourier":
        raise ValueError(f"unknown method {method!r}")

    if np.any(y0):
        raise ValueError("fourier pricing assumes y0 = 0 (normalized forward)")
    last_err = None
    for attempt in range(3):
        a = alpha / (2 ** attempt)
        try:
            nds = nodes if nodes is not None and nodes.alpha == a else \
                transform_nodes(model, T, T_hat, alpha=a, tol=tol)

            def cf_of(nn):
                if stationary_regime:
                    return _stationary_cf_row(model, nn, tol)
                return nn.cf_matrix(cone.vec(x0)[None, :])

            cf = cf_of(nds)
            while nds.tail_fraction(cf) > 10 * nds.tol \
                    and nds.panel_edges.size - 1 < 96:
                nds = _extend_nodes(model, nds, 4)
                cf = cf_of(nds)
            price = float(nds.price_rows(cf, float(np.log(K)))[0])
            return price, None
        except DomainBlowup as err:
            last_err = err
    raise last_err


def price_forward_start(model: PricingModel, tau: float, T: float,
                        T_hat: float, K: float, n_draws: int = 20_000,
                        seed: int = 0, threads: int | None = None,
                        alpha: float = DEFAULT_ALPHA, tol: float = 1e-8,
                        nodes: TransformNodes | None = None):
    """Forward-start call, log strike K: E (F(tau+T, tau+T_hat)/F(tau, tau+T_hat) - e^K)+.

    Conditional Monte Carlo: the payoff given the covariance state at
    the start date equals a European call on a normalized forward
    started at (x0 = X_tau, y0 = 0), so each draw is one damped-Fourier
    price on the shared node set.
    """
    if tau < 0:
        raise ValueError("start date must be nonnegative")
    p = model.joint.x_params
    if tau == 0.0:
        draws = model.x0[None, :, :]
    else:
        G_ou = cone.lyapunov_factor(p.B, p.dim) if p.mu.n_atoms == 0 else None
        if G_ou is not None:
            sample = sim.simulate_ou_exact(G_ou, p.b, p.m, model.x0,
                                           np.array([tau]), seed,
                                           n_paths=n_draws, threads=threads)
        else:
            sample = sim.simulate_affine_thinning(p, model.x0, np.array([tau]),
                                                  seed, n_paths=n_draws,
                                                  threads=threads)
        draws = sample.states[:, 0]
    if nodes is None:
        nodes = transform_nodes(model, T, T_hat, alpha=alpha, tol=tol)
    cf = nodes.cf_matrix(cone.vec(draws))
    while nodes.tail_fraction(cf) > 10 * nodes.tol \
            and nodes.panel_edges.size - 1 < 96:
        nodes = _extend_nodes(model, nodes, 4)
        cf = nodes.cf_matrix(cone.vec(draws))
    prices = nodes.price_rows(cf, float(K))
    mean = float(prices.mean())
    se = float(prices.std(ddof=1) / np.sqrt(prices.size)) if prices.size > 1 else 0.0
    return mean, se


# ---------------------------------------------------------------------------
# smile


@dataclass(frozen=True)
class SmileTable:
    """Implied forward volatilities per (start date, strike); the
    stationary-regime rows carry tau = inf."""

    tau: np.ndarray
    T: np.ndarray
    T_hat: np.ndarray
    K: np.ndarray                # log strikes
    price: np.ndarray
    implied_vol: np.ndarray
    se: np.ndarray               # standard error of implied_vol

    def rows(self):
        for i in range(self.tau.size):
            yield (self.tau[i], self.T[i], self.T_hat[i], self.K[i],
                   self.price[i], self.implied_vol[i], self.se[i])


def forward_mean(model: PricingModel, T: float, T_hat: float, regime) -> float:
    """E[F~(T, T_hat)] in the given regime; equals 1 under the
    martingale drift with y0 = 0."""
    n = model.joint.x_params.dim
    e_vec = eval_vector(model.space, T_hat - T)
    if T == 0.0:
        if isinstance(regime, str):
            raise ValueError("stationary regime needs T > 0")
        _, y0 = regime
        return 1.0 if y0 is None else float(np.exp(e_vec @ np.asarray(y0, dtype=float)))
    phi, psi1, psi2 = jm.joint_riccati_terminal(
        model.joint, e_vec, np.zeros((n, n)), T)
    if isinstance(regime, str):
        if regime != jm.STATIONARY:
            raise ValueError(f"unknown regime {regime!r}")
        from . import stationary as stat
        val = np.exp(-phi) * stat.laplace_invariant(model.joint.x_params, psi2)
        return float(np.real(val))
    x0, y0 = regime
    x0 = cone.cone_element(x0)
    head = 0.0 if y0 is None else np.asarray(y0, dtype=float) @ psi1
    return float(np.real(np.exp(head - phi - cone.trace_inner(x0, psi2))))


def forward_start_implied_vol(price: float, K: float, T: float):
    """Black volatility of a unit-forward call with log strike K."""
    sigma = implied_vol(price, 1.0, float(np.exp(K)), T, 0.0)
    vega = black76_vega(1.0, float(np.exp(K)), T, 0.0, sigma)
    return sigma, vega


def smile_convergence(model: PricingModel, tau_grid, T: float, T_hat: float,
                      K_grid, n_draws: int = 20_000, seed: int = 0,
                      threads: int | None = None,
                      alpha: float = DEFAULT_ALPHA, tol: float = 1e-8) -> SmileTable:
    """Implied forward volatility smile across start dates plus the
    stationary-regime limit rows (tau = inf).

    All prices share one frozen node set so the quadrature bias cancels
    in the tau-to-limit comparison.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    K_grid = np.asarray(K_grid, dtype=float)
    nodes = transform_nodes(model, T, T_hat, alpha=alpha, tol=tol)
    rows = {k: [] for k in ("tau", "K", "price", "iv", "se")}

    for i, tau in enumerate(tau_grid):
        for K in K_grid:
            price, se_p = price_forward_start(
                model, float(tau), T, T_hat, float(K), n_draws=n_draws,
                seed=seed + i, threads=threads, nodes=nodes)
            sigma, vega = forward_start_implied_vol(price, float(K), T)
            rows["tau"].append(tau)
            rows["K"].append(K)
            rows["price"].append(price)
            rows["iv"].append(sigma)
            rows["se"].append(se_p / vega if vega > 0 else np.inf)

    cf_stat = _stationary_cf_row(model, nodes, tol)
    for K in K_grid:
        price = float(nodes.price_rows(cf_stat, float(K))[0])
        sigma, _ = forward_start_implied_vol(price, float(K), T)
        rows["tau"].append(np.inf)
        rows["K"].append(K)
        rows["price"].append(price)
        rows["iv"].append(sigma)
        rows["se"].append(0.0)

    m = len(rows["tau"])
    return SmileTable(tau=np.asarray(rows["tau"]),
                      T=np.full(m, T), T_hat=np.full(m, T_hat),
                      K=np.asarray(rows["K"]),
                      price=np.asarray(rows["price"]),
                      implied_vol=np.asarray(rows["iv"]),
                      se=np.asarray(rows["se"]))
