"""Regenerate the bundled spec JSONs in src/affine_lab/specs/.

The OU and state-dependent process specs are written with exact decimal
inputs; the desk pricing model is assembled by build_forward_model so
the stored generator and drift adjustment match the curve space to full
float precision.
"""

import json
import os

import numpy as np

from affine_lab import cone, params, pricing

HERE = os.path.dirname(os.path.abspath(__file__))
SPEC_DIR = os.path.join(HERE, "..", "src", "affine_lab", "specs")


def dump(name: str, doc: dict) -> None:
    path = os.path.join(SPEC_DIR, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("wrote", os.path.normpath(path))


def ou_n2() -> dict:
    # delta = 1: slow enough that the Wasserstein bound at t = 4 stays
    # above the finite-sample floor of 1024-point empirical clouds
    model = {
        "dim": 2,
        "b": [[0.15, 0.0], [0.0, 0.15]],
        "B": {"lyapunov": [[-0.5, 0.1], [0.0, -0.55]]},
        "m": [
            {"w": 0.5, "xi": [[0.1, 0.02], [0.02, 0.06]]},
            {"w": 0.25, "xi": [[0.04, -0.01], [-0.01, 0.08]]},
        ],
        "mu": [],
    }
    return {
        "seed": 101,
        "model": model,
        "riccati": {"u": [[1.0, 0.2], [0.2, 0.8]], "T": 2.0, "points": 65},
        "stationary": {"t_grid": [0.5, 1.0, 2.0, 4.0],
                       "x0": [[0.6, 0.0], [0.0, 0.1]]},
        "simulate": {"x0": [[0.3, 0.1], [0.1, 0.2]],
                     "t_grid": [0.25, 0.5, 1.0, 2.0], "n_paths": 4096},
        "wdist": {"x0": [[0.6, 0.0], [0.0, 0.1]],
                  "t_grid": [0.5, 1.0, 2.0, 4.0],
                  "n_paths": 1024, "bootstrap": 64},
    }


def statedep_n2() -> dict:
    n = 2
    G = -0.7 * np.eye(n)
    xi_s = np.array([[0.5, 0.1], [0.1, 0.4]])
    M_s = np.diag([0.3, 0.1])
    # linear drift with the jump compensation that keeps quasi-monotonicity
    Bmat = cone.lyapunov_superop(G).matrix + np.outer(
        cone.vec(xi_s), cone.vec(M_s) / float(np.sum(xi_s * xi_s)))
    model = {
        "dim": n,
        "b": [[0.6, 0.0], [0.0, 0.6]],
        "B": Bmat.tolist(),
        "m": [{"w": 0.8, "xi": [[0.3, 0.0], [0.0, 0.3]]}],
        "mu": [{"M": M_s.tolist(), "xi": xi_s.tolist()}],
    }
    p = params.params_from_json(model)
    assert p.validated, "state-dependent spec must pass validation"
    return {
        "seed": 202,
        "model": model,
        "riccati": {"u": [[0.8, 0.1], [0.1, 0.5]], "T": 2.0, "points": 65},
        "stationary": {"t_grid": [0.5, 1.0, 2.0, 4.0],
                       "x0": [[1.5, 0.0], [0.0, 0.2]]},
        "simulate": {"x0": [[0.8, 0.2], [0.2, 0.5]],
                     "t_grid": [0.25, 0.5, 1.0], "n_paths": 2048},
        "wdist": {"x0": [[1.5, 0.0], [0.0, 0.2]],
                  "t_grid": [0.5, 1.0, 2.0, 4.0],
                  "n_paths": 512, "bootstrap": 64},
    }


def desk_n2() -> dict:
    beta = 1.0
    T, T_hat = 0.25, 0.5
    # anchors: dense to the delivery date, then extended 2(T + T_hat)
    # beyond it so drifted evaluators stay inside the span
    anchors = [0.0, 0.125, 0.25, 0.375, 0.5, 0.875, 1.25, 1.625, 2.0]
    space = pricing.make_space(beta, anchors)
    n = 2
    G = -0.5 * np.eye(n)                # delta = 1 for the covariance state
    b = 0.10 * np.eye(n)
    xi = np.array([[0.12, 0.04], [0.04, 0.08]])
    p = params.make_params(n, b, {"lyapunov": G}, [(0.6, xi)], [])
    assert p.validated

    # calibrate the noise scale to 20% instantaneous forward vol at the
    # stationary covariance mean
    z = b + 0.6 * xi
    e = pricing.eval_vector(space, T_hat - T)
    q = np.outer(e[:n], e[:n])
    d0 = 0.04 / float(np.sum(z * q))
    D = d0 * np.eye(space.dim)

    x0 = np.array([[0.05, 0.0], [0.0, 0.03]])   # well below the mean
    model = pricing.build_forward_model(space, D, p, x0)
    doc = pricing.model_to_json(model)
    return {
        "seed": 404,
        "model": doc,
        "riccati": {"u": [[1.0, 0.0], [0.0, 1.0]], "T": 2.0, "points": 65},
        "stationary": {"t_grid": [0.5, 1.0, 2.0, 4.0],
                       "x0": x0.tolist()},
        "simulate": {"x0": x0.tolist(),
                     "t_grid": [0.25, 0.5, 1.0, 2.0], "n_paths": 4096},
        "wdist": {"x0": [[0.5, 0.0], [0.0, 0.02]],
                  "t_grid": [0.5, 1.0, 2.0, 4.0],
                  "n_paths": 1024, "bootstrap": 64},
        "price": {"T": T, "T_hat": T_hat,
                  "strikes": [0.8, 0.9, 1.0, 1.1, 1.2],
                  "regime": "stationary", "method": "fourier"},
        "smile": {"tau_grid": [1.0, 2.0, 4.0, 8.0], "T": T, "T_hat": T_hat,
                  "strikes": [-0.2, -0.1, 0.0, 0.1, 0.2],
                  "n_draws": 20000},
    }


if __name__ == "__main__":
    os.makedirs(SPEC_DIR, exist_ok=True)
    dump("ou_n2.json", ou_n2())
    dump("statedep_n2.json", statedep_n2())
    dump("desk_n2.json", desk_n2())
