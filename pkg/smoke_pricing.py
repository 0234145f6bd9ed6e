import time
import numpy as np
from affine_lab import cone, params, pricing as pr, covariance as jm

t_start = time.time()

# desk-scale forward model: rank-2 covariance, 3 anchors
beta = 1.0
space = pr.make_space(beta, [0.0, 0.25, 0.5])
T, T_hat = 0.25, 0.5

n = 2
G = -0.5 * np.eye(n)
b = 0.10 * np.eye(n)
xi = np.array([[0.12, 0.04], [0.04, 0.08]])
m_atoms = [(0.6, xi)]
z = b + 0.6 * xi                      # stationary mean for G = -I/2
e = pr.eval_vector(space, T_hat - T)
q = np.outer(e[:n], e[:n])
d0 = 0.04 / float(np.sum(z * q))
print(f"d0 = {d0:.6f}, inst variance = {d0 * np.sum(z * q):.4f}")
D = d0 * np.eye(3)

p_ou = params.make_params(n, b, {"lyapunov": G}, m_atoms, [])
x0 = np.array([[0.05, 0.0], [0.0, 0.03]])   # far below the stationary mean
model = pr.build_forward_model(space, D, p_ou, x0)

# curve space sanity
for j, xj in enumerate(space.anchors):
    ev = pr.eval_vector(space, xj)
    assert np.allclose(ev, space.chol.T[:, j], atol=1e-12)
print("anchor eval vectors = Cholesky columns: ok")
crv = pr.curve_from_values(space, [0.1, -0.2, 0.3])
print("curve reconstruction:", np.max(np.abs(crv.at_anchors() - [0.1, -0.2, 0.3])))
S0 = pr.shift_matrix(space, 0.0)
print("shift(0) = I:", np.max(np.abs(S0 - np.eye(3))))
print("shift defect tau=0.25 (3 anchors):", pr.shift_defect(space, 0.25))
big = pr.make_space(beta, np.concatenate([[0.0], np.linspace(0.1, 0.5 + 2 * (T + T_hat), 18)]))
S1, S2 = pr.shift_matrix(big, 0.1), pr.shift_matrix(big, 0.15)
S12 = pr.shift_matrix(big, 0.25)
comp_err = max(np.linalg.norm((S1 @ S2 - S12) @ pr.eval_vector(big, xx))
               for xx in big.anchors)
print(f"composition defect on extended grid: {comp_err:.2e}, "
      f"reported {pr.shift_defect(big, 0.1):.2e}")

# martingale adjustment: E[exp(<Y_T, u_{T_hat-T}>)] should be ~ 1
ph, ps1, ps2 = jm.joint_riccati_terminal(model.joint, e, np.zeros((n, n)), T)
val_point = np.exp(-ph - cone.trace_inner(x0, ps2))
print(f"E[F~] point regime: {val_point.real:.8f} (psi2 norm {np.abs(ps2).max():.2e})")
from affine_lab import stationary
val_stat = np.exp(-ph) * stationary.laplace_invariant(p_ou, ps2)
print(f"E[F~] stationary:   {val_stat.real:.8f}")

# black76 and implied vol oracles
ref = pr.black76_call(1.0, 1.0, 1.0, 0.0, 0.2)
print("black76 F=K=1,T=1,s=0.2:", ref, "(target 0.07965567455405798)")
iv = pr.implied_vol(ref, 1.0, 1.0, 1.0, 0.0)
print("roundtrip iv:", abs(iv - 0.2))

# fourier European vs MC
t0 = time.time()
price_f, _ = pr.price_call_on_forward(model, T, T_hat, 1.0, (x0, None))
t1 = time.time()
print(f"fourier ATM point price: {price_f:.6f} ({t1-t0:.1f}s) "
      f"iv {pr.implied_vol(price_f, 1.0, 1.0, T, 0.0):.4f}")
price_m, se_m = pr.price_call_on_forward(model, T, T_hat, 1.0, (x0, None),
                                         method="mc", n_paths=100_000,
                                         n_steps=250, seed=3, threads=8)
t2 = time.time()
print(f"mc ATM: {price_m:.6f} +- {se_m:.6f} ({t2-t1:.1f}s); "
      f"|diff|/se = {abs(price_f - price_m)/se_m:.2f}")

price_fs, _ = pr.price_call_on_forward(model, T, T_hat, 1.0, "stationary")
print(f"fourier ATM stationary: {price_fs:.6f} "
      f"iv {pr.implied_vol(price_fs, 1.0, 1.0, T, 0.0):.4f}")

# deep ITM linearization: price ~ E[F] - K
pK, _ = pr.price_call_on_forward(model, T, T_hat, 0.5, (x0, None))
print(f"deep ITM K=0.5: {pK:.6f} vs E[F]-K = {val_point.real - 0.5:.6f}")

# forward start at tau=0 equals the European at strike e^K
logK = 0.05
pe, _ = pr.price_call_on_forward(model, T, T_hat, float(np.exp(logK)), (x0, None))
pf, se_f = pr.price_forward_start(model, 0.0, T, T_hat, logK)
print(f"tau=0 forward start {pf:.8f} vs European {pe:.8f} (diff {abs(pf-pe):.2e})")

# small smile run
t3 = time.time()
table = pr.smile_convergence(model, [1.0, 8.0], T, T_hat,
                             [-0.10, 0.0, 0.10], n_draws=4000, seed=11, threads=8)
t4 = time.time()
print(f"smile run: {t4-t3:.1f}s")
for row in table.rows():
    print("  tau=%5s K=%+.2f price=%.6f iv=%.4f se_iv=%.5f" %
          (row[0], row[3], row[4], row[5], row[6]))
print(f"total smoke time {time.time()-t_start:.1f}s")
