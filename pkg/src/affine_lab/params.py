"""Model parameters (b, B, m, mu): representation, validation, effective drifts.

The jump measures are finite and atomic, so every integral against them is a
finite sum and the jump dynamics are exactly simulable. The state-independent
measure m has atoms (w_k, xi_k); the state-dependent operator measure mu has
atoms (M_k, xi_k) and induces the jump kernel rate <x, M_k> / ||xi_k||^2 at
state x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cone
from .cone import SuperOperator, cone_element, hs_norm, sym_element, trace_inner, vec
from .errors import NotValidated
from .rng import philox_gen

#: small-jump truncation threshold of chi(xi) = xi * 1{||xi|| <= 1}
CHI_CUTOFF = 1.0


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite atomic measure on the cone minus the origin: atoms (weight, site)."""

    weights: np.ndarray
    sites: np.ndarray  # shape (k, n, n)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        s = np.asarray(self.sites, dtype=float)
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise ValueError("sites must have shape (k, n, n)")
        if w.size != s.shape[0]:
            raise ValueError("weights and sites must have matching lengths")
        if np.any(w <= 0):
            raise ValueError("all weights must be strictly positive")
        for x in s:
            if hs_norm(x) == 0:
                raise ValueError("sites must be nonzero")
            cone_element(x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "sites", s)

    @property
    def n_atoms(self) -> int:
        return int(self.weights.size)

    def second_moment(self) -> float:
        """sum_k w_k ||xi_k||^2 (always finite for an atomic measure)."""
        if self.n_atoms == 0:
            return 0.0
        return float(np.sum(self.weights * np.sum(self.sites**2, axis=(1, 2))))


def atomic_measure(atoms, n: int) -> AtomicMeasure:
    """Build an AtomicMeasure from an iterable of (weight, site) pairs."""
    atoms = list(atoms)
    if not atoms:
        return AtomicMeasure(np.zeros(0), np.zeros((0, n, n)))
    weights = np.array([float(w) for w, _ in atoms])
    sites = np.array([sym_element(x) for _, x in atoms])
    return AtomicMeasure(weights, sites)


@dataclass(frozen=True)
class OperatorMeasure:
    """Finite cone-operator-valued measure: atoms (mass M_k, site xi_k)."""

    masses: np.ndarray  # shape (k, n, n), each PSD
    sites: np.ndarray  # shape (k, n, n)

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        s = np.asarray(self.sites, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("masses must have shape (k, n, n)")
        if m.shape != s.shape:
            raise ValueError("masses and sites must have matching shapes")
        for x in m:
            cone_element(x)
        for x in s:
            if hs_norm(x) == 0:
                raise ValueError("sites must be nonzero")
            cone_element(x)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "sites", s)

    @property
    def n_atoms(self) -> int:
        return int(self.masses.shape[0])

    def total_mass(self) -> np.ndarray:
        """The operator mu(cone \\ {0}) = sum_k M_k."""
        return np.sum(self.masses, axis=0) if self.n_atoms else np.zeros(self.masses.shape[1:])


def operator_measure(atoms, n: int) -> OperatorMeasure:
    """Build an OperatorMeasure from an iterable of (mass, site) pairs."""
    atoms = list(atoms)
    if not atoms:
        return OperatorMeasure(np.zeros((0, n, n)), np.zeros((0, n, n)))
    masses = np.array([sym_element(M) for M, _ in atoms])
    sites = np.array([sym_element(x) for _, x in atoms])
    return OperatorMeasure(masses, sites)


@dataclass
class ValidationReport:
    ok: bool
    drift_condition: bool
    quasi_monotone: bool
    quasi_monotone_min: float
    drift_margin: float
    n_probe: int
    seed: int
    tol: float
    notes: tuple[str, ...] = ()

    def summary(self) -> str:
        lines = [
            f"drift condition (b - I_m PSD): {'pass' if self.drift_condition else 'FAIL'}"
            f" (min eigenvalue {self.drift_margin:.3e})",
            f"quasi-monotonicity ({self.n_probe} orthogonal rank-one probes):"
            f" {'pass' if self.quasi_monotone else 'FAIL'}"
            f" (worst probe value {self.quasi_monotone_min:.3e})",
            "positivity/support of the jump atoms: pass (enforced at construction)",
        ]
        lines += list(self.notes)
        return "\n".join(lines)


@dataclass
class AdmissibleParams:
    """Parameter set (b, B, m, mu) for an affine cone-valued process.

    b is the constant drift, B the linear drift as a SuperOperator acting on
    states, m the state-independent jump measure, mu the state-dependent one.
    Operations that depend on admissibility require validate() to have passed.
    """

    dim: int
    b: np.ndarray
    B: SuperOperator
    m: AtomicMeasure
    mu: OperatorMeasure
    validated: bool = False
    report: ValidationReport | None = field(default=None, repr=False)

    def __post_init__(self):
        self.b = sym_element(self.b)
        if self.b.shape != (self.dim, self.dim):
            raise ValueError("b has the wrong dimension")
        if self.B.dim != self.dim:
            raise ValueError("B has the wrong dimension")
        if self.m.n_atoms and self.m.sites.shape[-1] != self.dim:
            raise ValueError("m atoms have the wrong dimension")
        if self.mu.n_atoms and self.mu.sites.shape[-1] != self.dim:
            raise ValueError("mu atoms have the wrong dimension")

    def require_validated(self):
        if not self.validated:
            raise NotValidated("parameter set has not passed validate()")


def small_jump_compensator(m: AtomicMeasure) -> np.ndarray:
    """I_m = sum over atoms with ||xi|| <= 1 of w_k xi_k."""
    if m.n_atoms == 0:
        n = m.sites.shape[-1] if m.sites.ndim == 3 else 0
        return np.zeros((n, n))
    norms = np.sqrt(np.sum(m.sites**2, axis=(1, 2)))
    small = norms <= CHI_CUTOFF
    if not np.any(small):
        return np.zeros_like(m.sites[0])
    return np.einsum("k,kij->ij", m.weights[small], m.sites[small])


def validate(
    p: AdmissibleParams,
    n_probe: int = 200,
    tol: float = 1e-10,
    seed: int = 0,
) -> ValidationReport:
    """Check the admissibility conditions and record the verdict on p.

    The drift condition is exact (cone membership of b - I_m via the smallest
    eigenvalue). Quasi-monotonicity is probed on seeded random orthogonal
    rank-one pairs u = v v^T, x = w w^T with v perpendicular to w; these pairs
    realize <u, x> = 0 exactly and are the extreme rays of the condition.
    Failures are reported, not raised.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be at least 1")
    n = p.dim
    drift_gap = p.b - small_jump_compensator(p.m)
    drift_margin = float(np.linalg.eigvalsh(drift_gap)[0])
    drift_ok = drift_margin >= -tol

    gen = philox_gen(seed, 0x51D)
    Bt = p.B.matrix.T  # adjoint acting on vectorized test elements
    mu_sites = p.mu.sites
    mu_masses = p.mu.masses
    if p.mu.n_atoms:
        site_norm2 = np.sum(mu_sites**2, axis=(1, 2))
        small = np.sqrt(site_norm2) <= CHI_CUTOFF
    worst = np.inf
    if n == 1:
        # no orthogonal pairs exist at rank one; the condition is vacuous
        worst = 0.0
    else:
        for _ in range(n_probe):
            v = gen.standard_normal(n)
            v /= np.linalg.norm(v)
            w = gen.standard_normal(n)
            w -= v * (v @ w)
            nrm = np.linalg.norm(w)
            if nrm < 1e-12:
                continue
            w /= nrm
            u = np.outer(v, v)
            x = np.outer(w, w)
            val = float(vec(x) @ (Bt @ vec(u)))
            if p.mu.n_atoms and np.any(small):
                chi_u = trace_inner(mu_sites[small], u)
                m_x = trace_inner(mu_masses[small], x)
                val -= float(np.sum(chi_u * m_x / site_norm2[small]))
            worst = min(worst, val)
    qm_ok = worst >= -tol

    report = ValidationReport(
        ok=drift_ok and qm_ok,
        drift_condition=drift_ok,
        quasi_monotone=qm_ok,
        quasi_monotone_min=worst,
        drift_margin=drift_margin,
        n_probe=n_probe,
        seed=seed,
        tol=tol,
    )
    p.validated = report.ok
    p.report = report
    return report


def effective_drift(p: AdmissibleParams) -> tuple[np.ndarray, SuperOperator]:
    """Effective constant drift b_hat and linear drift B_hat.

    b_hat absorbs the mass of large m-atoms; B_hat acts on test elements u as
    B*(u) + sum over large mu-atoms of <xi_k, u> M_k / ||xi_k||^2. Its matrix
    transpose drives the state-side mean flow.
    """
    p.require_validated()
    b_hat = p.b.copy()
    if p.m.n_atoms:
        norms = np.sqrt(np.sum(p.m.sites**2, axis=(1, 2)))
        big = norms > CHI_CUTOFF
        if np.any(big):
            b_hat = b_hat + np.einsum("k,kij->ij", p.m.weights[big], p.m.sites[big])
    mat = p.B.matrix.T.copy()
    if p.mu.n_atoms:
        norm2 = np.sum(p.mu.sites**2, axis=(1, 2))
        big = np.sqrt(norm2) > CHI_CUTOFF
        for k in np.flatnonzero(big):
            mat += np.outer(vec(p.mu.masses[k]) / norm2[k], vec(p.mu.sites[k]))
    return b_hat, SuperOperator(p.dim, mat)


def jump_rates(p: AdmissibleParams, x: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Atom-level jump rates at state x: (lambda_k, site xi_k).

    m-atoms contribute their constant weight, mu-atoms the state-dependent
    rate <x, M_k> / ||xi_k||^2; tiny negative values from roundoff are clamped
    to zero. Coincident sites are kept as separate entries, which induces the
    same jump process.
    """
    p.require_validated()
    out: list[tuple[float, np.ndarray]] = []
    for k in range(p.m.n_atoms):
        out.append((float(p.m.weights[k]), p.m.sites[k]))
    for k in range(p.mu.n_atoms):
        rate = trace_inner(x, p.mu.masses[k]) / float(np.sum(p.mu.sites[k] ** 2))
        if rate < -1e-12:
            raise ValueError(f"negative jump rate {rate:.3e}; state outside the cone?")
        out.append((max(0.0, float(rate)), p.mu.sites[k]))
    return out


def make_params(dim, b, B, m_atoms=(), mu_atoms=(), validate_now=True, **validate_kw) -> AdmissibleParams:
    """Convenience constructor; B may be a SuperOperator, an N x N matrix, or a
    dict {"lyapunov": G}."""
    if isinstance(B, SuperOperator):
        B_op = B
    elif isinstance(B, dict):
        if set(B) != {"lyapunov"}:
            raise ValueError(f"unknown drift shortcut keys: {sorted(set(B) - {'lyapunov'})}")
        B_op = cone.lyapunov_superop(np.asarray(B["lyapunov"], dtype=float))
    else:
        B_op = SuperOperator(dim, np.asarray(B, dtype=float))
    p = AdmissibleParams(
        dim=dim,
        b=b,
        B=B_op,
        m=atomic_measure(m_atoms, dim),
        mu=operator_measure(mu_atoms, dim),
    )
    if validate_now:
        validate(p, **validate_kw)
    return p


def params_to_json(p: AdmissibleParams) -> dict:
    """Serialize to the interchange schema (row-major nested lists)."""
    return {
        "dim": p.dim,
        "b": p.b.tolist(),
        "B": p.B.matrix.tolist(),
        "m": [
            {"w": float(w), "xi": xi.tolist()}
            for w, xi in zip(p.m.weights, p.m.sites)
        ],
        "mu": [
            {"M": M.tolist(), "xi": xi.tolist()}
            for M, xi in zip(p.mu.masses, p.mu.sites)
        ],
    }


def params_from_json(doc: dict, validate_now: bool = True, **validate_kw) -> AdmissibleParams:
    """Parse the interchange schema; unknown keys are rejected."""
    allowed = {"dim", "b", "B", "m", "mu"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    missing = {"dim", "b", "B"} - set(doc)
    if missing:
        raise ValueError(f"missing parameter keys: {sorted(missing)}")
    dim = int(doc["dim"])
    m_atoms = []
    for entry in doc.get("m", []):
        extra = set(entry) - {"w", "xi"}
        if extra:
            raise ValueError(f"unknown m-atom keys: {sorted(extra)}")
        m_atoms.append((entry["w"], np.asarray(entry["xi"], dtype=float)))
    mu_atoms = []
    for entry in doc.get("mu", []):
        extra = set(entry) - {"M", "xi"}
        if extra:
            raise ValueError(f"unknown mu-atom keys: {sorted(extra)}")
        mu_atoms.append((np.asarray(entry["M"], dtype=float), np.asarray(entry["xi"], dtype=float)))
    return make_params(
        dim,
        np.asarray(doc["b"], dtype=float),
        doc["B"],
        m_atoms,
        mu_atoms,
        validate_now=validate_now,
        **validate_kw,
    )
