"""Independent reference computations shared by several test modules."""

import numpy as np
from scipy.optimize import minimize

from robust_mcbf.lmi import RobustQuadratic


def random_robust_quadratic(rng, n=2):
    """Random instance whose worst case sits near zero more often than not."""
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = 0.5 * (G + G.conj().T)
    b = 0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    L = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    C = L @ L.conj().T + 0.5 * np.eye(n)
    c = rng.uniform(-1.0, 3.0)
    return RobustQuadratic(A, b, c, C)


def _whitener(C):
    vals, vecs = np.linalg.eigh(C)
    return (vecs / np.sqrt(vals)) @ vecs.conj().T


def sampled_min(rq: RobustQuadratic, num_points: int, rng, polish: int = 8):
    """Minimum of the quadratic over the ellipsoid from ``num_points`` samples
    (half uniform in the ball, half on its boundary), refined by local
    constrained minimization started from the best samples."""
    n = rq.a_matrix.shape[0]
    T = _whitener(rq.shape_matrix)
    g = rng.standard_normal((num_points, n)) + 1j * rng.standard_normal((num_points, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(num_points) ** (1.0 / (2 * n))
    r[: num_points // 2] = 1.0
    u = g * r[:, None]
    vals = rq.value(u @ T.T)
    best = float(vals.min())
    if polish:
        def f(x):
            e = T @ (x[:n] + 1j * x[n:])
            return float(rq.value(e))
        cons = {"type": "ineq", "fun": lambda x: 1.0 - x @ x}
        for idx in np.argsort(vals)[:polish]:
            x0 = np.concatenate([u[idx].real, u[idx].imag])
            res = minimize(f, x0, method="SLSQP", constraints=[cons],
                           options={"ftol": 1e-14, "maxiter": 200})
            if res.success and res.x @ res.x <= 1.0 + 1e-12:
                best = min(best, float(res.fun))
    return best
