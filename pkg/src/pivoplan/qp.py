"""Dense dual active-set solver (Goldfarb-Idnani) for strictly convex QPs.

    minimize    1/2 x'Hx + c'x
    subject to  A x >= b

Each iteration solves the KKT system of the current working set directly;
problem sizes in the planner are a few dozen variables and rows.
"""

import numpy as np


class InfeasibleQP(RuntimeError):
    pass


def _kkt_direction(H, N, normal):
    """Primal step z (in the null space of the active normals) and dual step r."""
    n = H.shape[0]
    m = N.shape[1]
    if m == 0:
        return np.linalg.solve(H, normal), np.zeros(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = N
    K[n:, :n] = N.T
    rhs = np.zeros(n + m)
    rhs[:n] = normal
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(H, c, A, b, tol=1e-10, max_iter=500):
    """Return ``(x, multipliers, active)``; raises :class:`InfeasibleQP`."""
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    b = np.asarray(b, dtype=float)
    x = -np.linalg.solve(H, c)
    active = []
    u = np.zeros(0)
    scale = 1.0 + np.abs(b)
    for _ in range(max_iter):
        s = A @ x - b
        viol = s / scale
        if len(active):
            viol[active] = np.inf
        p = int(np.argmin(viol)) if len(viol) else -1
        if p < 0 or viol[p] >= -tol:
            lam = np.zeros(len(b))
            lam[active] = u
            return x, lam, sorted(active)
        normal = A[p]
        u_plus = np.append(u, 0.0)
        while True:
            N = A[active].T if active else np.zeros((len(c), 0))
            z, r = _kkt_direction(H, N, normal)
            t1, k = np.inf, -1
            if len(active):
                pos = r > 1e-12
                if np.any(pos):
                    ratios = np.full(len(r), np.inf)
                    ratios[pos] = u_plus[:-1][pos] / r[pos]
                    k = int(np.argmin(ratios))
                    t1 = ratios[k]
            zn = float(z @ normal)
            t2 = np.inf
            if np.linalg.norm(z) > 1e-12 and zn > 1e-14:
                t2 = -(normal @ x - b[p]) / zn
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise InfeasibleQP(f"constraint {p} cannot be satisfied together with the active set")
            if not np.isfinite(t2):
                u_plus[:-1] -= t1 * r
                u_plus[-1] += t1
                del active[k]
                u_plus = np.delete(u_plus, k)
                continue
            t = min(t1, t2)
            x = x + t * z
            u_plus[:-1] -= t * r
            u_plus[-1] += t
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            del active[k]
            u_plus = np.delete(u_plus, k)
    raise InfeasibleQP("active-set iteration limit reached")
