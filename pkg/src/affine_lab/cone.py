"""Finite-rank symmetric operators, their positive cone, and linear maps on them.

The state space is the set of real symmetric n x n matrices with the trace
inner product <x, y> = Tr(yx); the cone is the positive semidefinite subset.
Everything downstream works in the isometric symmetric vectorization, in which
the vector 2-norm equals the Hilbert-Schmidt (Frobenius) norm, so operator
norms of linear maps measured on the vectorized coordinates agree with the
norms used by the analytical bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotSubcritical

SYM_RTOL = 1e-12
TOL_PSD = 1e-10

_SQRT2 = np.sqrt(2.0)


def sym_dim(n: int) -> int:
    """Dimension N = n(n+1)/2 of the symmetric matrices at rank n."""
    return n * (n + 1) // 2


def _triu_indices(n: int):
    return np.triu_indices(n)


def sym_element(a, rtol: float = SYM_RTOL) -> np.ndarray:
    """Validate and return a symmetric matrix (symmetrized copy).

    Accepts anything array-like, complex included (symmetric means a = a^T
    without conjugation); raises if the asymmetry exceeds
    rtol * (1 + max entry magnitude).
    """
    a = np.asarray(a)
    a = a.astype(complex) if np.iscomplexobj(a) else a.astype(float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    gap = np.max(np.abs(a - a.T)) if a.size else 0.0
    scale = 1.0 + (np.max(np.abs(a)) if a.size else 0.0)
    if gap > rtol * scale:
        raise ValueError(f"matrix is not symmetric: max asymmetry {gap:.3e}")
    return 0.5 * (a + a.T)


def cone_element(a, tol: float = TOL_PSD) -> np.ndarray:
    """Validate and return a PSD symmetric matrix."""
    x = sym_element(a)
    lam = float(np.linalg.eigvalsh(x)[0]) if x.size else 0.0
    if lam < -tol:
        raise ValueError(f"matrix is not positive semidefinite: lambda_min = {lam:.3e}")
    return x


def vec(x: np.ndarray) -> np.ndarray:
    """Isometric symmetric vectorization: diagonal kept, off-diagonal scaled by sqrt(2).

    The 2-norm of the result equals the Hilbert-Schmidt norm of x. Works for
    real or complex symmetric input; batched input (..., n, n) is vectorized
    along the leading axes.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    rows, cols = _triu_indices(n)
    out = x[..., rows, cols].copy()
    off = rows != cols
    out[..., off] *= _SQRT2
    return out


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    rows, cols = _triu_indices(n)
    off = rows != cols
    w = v.copy()
    w[..., off] /= _SQRT2
    x = np.zeros(v.shape[:-1] + (n, n), dtype=v.dtype)
    x[..., rows, cols] = w
    x[..., cols, rows] = w
    return x


def trace_inner(x: np.ndarray, y: np.ndarray):
    """Trace inner product Tr(yx) = sum_ij x_ij y_ij.

    Bilinear (no conjugation), so it extends to the complexified space the way
    the transform formulas need.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    out = np.sum(x * y, axis=(-2, -1))
    return out if out.ndim else out[()]


def hs_norm(x: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm; uses |.|^2 so complex input is fine."""
    return float(np.sqrt(np.sum(np.abs(x) ** 2)))


def is_in_cone(x: np.ndarray, tol: float = TOL_PSD) -> bool:
    """True iff the smallest eigenvalue of x is >= -tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.linalg.eigvalsh(x)[0] >= -tol)


def cone_project(x: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix: eigendecompose and clip negative eigenvalues to zero."""
    lam, q = np.linalg.eigh(x)
    lam = np.clip(lam, 0.0, None)
    return (q * lam) @ q.T


def cone_project_batch(x: np.ndarray) -> np.ndarray:
    """Batched :func:`cone_project` over leading axes."""
    lam, q = np.linalg.eigh(x)
    lam = np.clip(lam, 0.0, None)
    return np.einsum("...ik,...k,...jk->...ij", q, lam, q)


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on symmetric matrices, stored on vectorized coordinates.

    matrix is N x N with N = n(n+1)/2 acting on vec(x); because the
    vectorization is isometric, `opnorm` is the operator norm with respect to
    the Hilbert-Schmidt norm and `adjoint` is the plain matrix transpose.
    """

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        N = sym_dim(self.dim)
        if m.shape != (N, N):
            raise ValueError(f"expected a {N}x{N} matrix for dim {self.dim}, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def _apply_vec(self, v: np.ndarray) -> np.ndarray:
        return v @ self.matrix.T

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return unvec(self._apply_vec(vec(x)), self.dim)

    apply = __call__

    def adjoint(self) -> "SuperOperator":
        return SuperOperator(self.dim, self.matrix.T)

    def compose(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.dim, self.matrix @ other.matrix)

    def add(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.dim, self.matrix + other.matrix)

    def scale(self, c: float) -> "SuperOperator":
        return SuperOperator(self.dim, c * self.matrix)

    def opnorm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def zero_superop(n: int) -> SuperOperator:
    return SuperOperator(n, np.zeros((sym_dim(n), sym_dim(n))))


def identity_superop(n: int) -> SuperOperator:
    return SuperOperator(n, np.eye(sym_dim(n)))


def superop_from_map(n: int, fn) -> SuperOperator:
    """Assemble the matrix of a linear map on symmetric matrices from its action."""
    N = sym_dim(n)
    cols = np.empty((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        cols[:, j] = vec(sym_element(fn(unvec(e, n))))
    return SuperOperator(n, cols)


def tensor_square(x: np.ndarray) -> SuperOperator:
    """Rank-one map y -> <x, y> x; its operator norm is the squared HS norm of x."""
    x = sym_element(np.asarray(x, dtype=float))
    v = vec(x)
    return SuperOperator(x.shape[0], np.outer(v, v))


def lyapunov_superop(G) -> SuperOperator:
    """The map u -> G u + u G^T as a SuperOperator.

    Its spectrum is the sumset of the spectrum of G with itself.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    return superop_from_map(G.shape[0], lambda u: G @ u + u @ G.T)


def lyapunov_factor(B: SuperOperator, n: int):
    """Recover G with B = lyapunov_superop(G) by least squares, else None."""
    # lyapunov_superop(G).matrix is linear in the entries of G
    rows = []
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            rows.append(lyapunov_superop(E).matrix.ravel())
    design = np.stack(rows, axis=1)
    sol, *_ = np.linalg.lstsq(design, B.matrix.ravel(), rcond=None)
    G = sol.reshape(n, n)
    resid = np.max(np.abs(lyapunov_superop(G).matrix - B.matrix))
    if resid > 1e-10 * (1.0 + np.max(np.abs(B.matrix))):
        return None
    return G


def superop_exp(A: SuperOperator, t: float) -> SuperOperator:
    """e^{tA} via scaling-and-squaring on the vectorized matrix."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return SuperOperator(A.dim, scipy.linalg.expm(t * A.matrix))


def superop_exp_apply(A: SuperOperator, t: float, x: np.ndarray) -> np.ndarray:
    """e^{tA} x without materializing the exponential at the call site."""
    return superop_exp(A, t)(x)


def spectral_bound(A: SuperOperator) -> float:
    """Largest real part over the spectrum of A."""
    return float(np.max(np.linalg.eigvals(A.matrix).real))


def stability_constants(A: SuperOperator, margin: float = 0.0) -> tuple[float, float]:
    """Certificate (M, delta) with ||e^{tA}|| <= M e^{-delta t} on a reference grid.

    delta = -spectral_bound(A) * (1 - margin); M is the supremum of
    ||e^{tA}|| e^{delta t} over a 400-point geometric grid on [0, 20/delta],
    clamped to at least 1. The certificate is grid-valid: M is exact for normal
    A and a measured envelope otherwise.
    """
    if not 0.0 <= margin < 1.0:
        raise ValueError("margin must lie in [0, 1)")
    s = spectral_bound(A)
    if s >= 0:
        raise NotSubcritical(f"spectral bound {s:.6g} is not negative")
    delta = -s * (1.0 - margin)
    t_max = 20.0 / delta
    grid = np.concatenate([[0.0], np.geomspace(t_max * 1e-6, t_max, 399)])
    m = np.asarray(A.matrix)
    best = 1.0
    for t in grid:
        growth = np.linalg.norm(scipy.linalg.expm(t * m), 2) * np.exp(delta * t)
        if growth > best:
            best = float(growth)
    return best, float(delta)
