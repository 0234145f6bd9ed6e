import numpy as np
from affine_lab import cone, params, riccati, stationary, covariance as cov

rng = np.random.default_rng(3)
n = 2

# standard compensated instance with a state-dependent atom
G = -0.7 * np.eye(n)
xi_s = np.array([[0.5, 0.1], [0.1, 0.4]])
M_s = np.diag([0.3, 0.1])
Bmat = cone.lyapunov_superop(G).matrix + np.outer(
    cone.vec(xi_s), cone.vec(M_s) / np.sum(xi_s * xi_s))
B = cone.SuperOperator(n, Bmat)
p_mu = params.make_params(n, 0.6 * np.eye(n), B,
                          [(0.8, 0.3 * np.eye(n))],
                          [(M_s, xi_s)])

# pure OU params (BNS-compatible)
G2 = np.array([[-0.8, 0.15], [0.0, -0.6]])
p_ou = params.make_params(n, 0.5 * np.eye(n), cone.lyapunov_superop(G2),
                          [(0.7, np.array([[0.4, 0.1], [0.1, 0.3]])),
                           (0.3, np.diag([1.2, 0.8]))], [])

dim_h = 3
A = np.array([[-0.3, 0.1, 0.0], [0.0, -0.5, 0.2], [0.0, 0.0, -0.4]])
Dfull = np.array([[1.0, 0.2, 0.1], [0.2, 0.8, 0.0], [0.1, 0.0, 0.6]])
N = cone.sym_dim(n)

spec_bns = cov.JointModelSpec(dim_h=dim_h, A=A, g0=np.zeros(dim_h),
                              Gamma=np.zeros((dim_h, N)), D=Dfull, x_params=p_ou)
spec_gen = cov.JointModelSpec(dim_h=dim_h, A=A, g0=np.array([0.1, -0.05, 0.2]),
                              Gamma=0.3 * rng.standard_normal((dim_h, N)),
                              D=Dfull, x_params=p_mu)

u2 = np.array([[0.4, 0.1], [0.1, 0.3]])
v1 = np.array([0.7, -0.4, 0.25])

# (a) u1 = 0 delegation equals the plain Riccati output exactly
sol_j = cov.joint_riccati(spec_gen, np.zeros(dim_h), u2, 2.0)
sol_r = riccati.solve_riccati(p_mu, u2, 2.0)
print("(a) delegation psi gap:", np.max(np.abs(sol_j.psi2 - sol_r.psi)),
      "phi gap:", np.max(np.abs(sol_j.Phi - sol_r.phi)))

# (b) hand ODE: A=0, D=I, u1=i e1, trivial covariance params -> psi2 = t/2 e1 e1^T
p_triv = params.make_params(2, np.zeros((2, 2)),
                            cone.SuperOperator(2, np.zeros((3, 3))), [], [])
spec_h = cov.JointModelSpec(dim_h=2, A=np.zeros((2, 2)), g0=np.zeros(2),
                            Gamma=np.zeros((2, 3)), D=np.eye(2), x_params=p_triv)
u1h = 1j * np.array([1.0, 0.0])
t = 1.7
Phi, psi1, psi2 = cov.joint_riccati_terminal(spec_h, u1h, np.zeros((2, 2)), t)
target = t * 0.5 * np.outer([1, 0], [1, 0])
print("(b) hand ODE gap:", np.max(np.abs(psi2 - target)), "Phi:", abs(Phi),
      "imag part:", np.max(np.abs(psi2.imag)))
x0h = np.array([[0.9, 0.2], [0.2, 0.5]])
val = cov.joint_transform(spec_h, x0h, u1h, np.zeros((2, 2)), t)
print("(b) transform vs e^{-t x11/2}:", abs(val - np.exp(-t * 0.45)))

# (c) BNS closed form vs generic ODE pipeline
x0 = np.array([[0.8, 0.1], [0.1, 0.6]])
y0 = np.array([0.2, -0.1, 0.3])
for tt in (0.5, 1.5):
    for u1 in (1j * v1, 1j * v1 + 0.0):
        a = cov.bns_transform(spec_bns, u1, u2, tt, x0=x0, y0=y0)
        b_ = cov.joint_transform(spec_bns, x0, u1, u2, tt, y0=y0)
        print(f"(c) point t={tt}: |bns-gen| = {abs(a - b_):.3e}  val={a:.6f}")
    a = cov.bns_transform(spec_bns, 1j * v1, u2, tt, stationary=True, y0=y0)
    b_ = cov.joint_transform(spec_bns, "stationary", 1j * v1, u2, tt, y0=y0)
    print(f"(c) stat  t={tt}: |bns-gen| = {abs(a - b_):.3e}  val={a:.6f}")

# (d) stationary regime, u1 = 0: transform is t-independent = invariant Laplace
lp = stationary.laplace_invariant(p_mu, u2)
for tt in (0.5, 1.0, 2.0, 5.0):
    val = cov.joint_transform(spec_gen, "stationary", np.zeros(dim_h), u2, tt)
    print(f"(d) t={tt}: |joint - L_pi| = {abs(val - lp):.3e}")

# (e) conjugate symmetry of the Fourier transform
a = cov.joint_transform(spec_gen, x0, 1j * v1, u2, 1.0, y0=y0)
b_ = cov.joint_transform(spec_gen, x0, -1j * v1, u2, 1.0, y0=y0)
print("(e) conj symmetry:", abs(a - np.conj(b_)))
