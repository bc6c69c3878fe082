"""Maximum trace of Cov(HX) under peak and average power constraints.

The optimum uses inputs in {0,A}^n_T that form a chain 0 < x_1 < ... in the
componentwise order, so for a fixed antenna ordering the problem reduces to
a concave quadratic program over the n_T + 1 prefix vectors. Everything is
solved at A = 1; values scale with A^2.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel_core import ChannelModel, effective_alpha

KKT_TOL = 1e-10
MAX_ITER = 100_000
EXACT_ORDERING_LIMIT = 8


class NonConvergence(RuntimeError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteInput:
    points: np.ndarray  # (k, n_T)
    probs: np.ndarray

    def power(self):
        return float(self.probs @ np.abs(self.points).sum(axis=1))


@dataclass(frozen=True)
class TraceSolution:
    value: float
    input: DiscreteInput
    ordering: tuple
    power_binding: bool = True
    support_bound_holds: bool | None = None


def trace_cov(model: ChannelModel, inp: DiscreteInput) -> float:
    Y = np.asarray(inp.points, dtype=float) @ model.H.T
    p = np.asarray(inp.probs, dtype=float)
    mean = p @ Y
    return float(p @ np.sum(Y ** 2, axis=1) - mean @ mean)


def binary_points(n_T):
    """All 2^n_T binary vectors, index k <-> bits of k (antenna 1 = MSB)."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n_T)))


def r_matrix(model: ChannelModel):
    """Rows (2 r_V, |V|, ||r_V||^2) for every nonempty subset V."""
    X = binary_points(model.n_T)[1:]
    R = X @ model.H.T
    return np.column_stack([2.0 * R, X.sum(axis=1), np.sum(R ** 2, axis=1)])


def check_R_rank(model: ChannelModel, n_random=20000, seed=0, tol=1e-9):
    """Whether every (n_R+2)-row square submatrix of R is nonsingular."""
    if model.n_R < 2:
        raise ValueError("needs a canonical model with n_R >= 2")
    if model.n_T > 12:
        raise TooLarge("R has too many rows")
    R = r_matrix(model)
    k = model.n_R + 2
    norms = np.linalg.norm(R, axis=1)
    if model.n_T <= 5:
        subsets = np.array(list(itertools.combinations(range(len(R)), k)))
    else:
        rng = np.random.default_rng(seed)
        subsets = np.array([np.sort(rng.choice(len(R), size=k, replace=False))
                            for _ in range(n_random)])
    for start in range(0, len(subsets), 50_000):
        idx = subsets[start:start + 50_000]
        dets = np.abs(np.linalg.det(R[idx]))
        scale = np.prod(norms[idx], axis=1)
        bad = np.flatnonzero(dets <= tol * scale)
        if bad.size:
            rows = idx[bad[0]]
            return False, R[rows]
    return True, None


# -- projections -----------------------------------------------------------

def _proj_simplex(y):
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, y.size + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    return np.maximum(y - css[rho] / (rho + 1.0), 0.0)


def _proj_feasible(y, c, alpha):
    """Euclidean projection onto {p >= 0, sum p = 1, c.p <= alpha}."""
    p = _proj_simplex(y)
    if c @ p <= alpha:
        return p
    def excess(eta):
        return c @ _proj_simplex(y - eta * c) - alpha

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    # excess is monotone and piecewise linear in the multiplier
    eta = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    p = _proj_simplex(y - eta * c)
    # exact multipliers on the identified support
    S = p > 0
    cs, ys = c[S], y[S]
    M = np.array([[S.sum(), cs.sum()], [cs.sum(), cs @ cs]])
    if abs(np.linalg.det(M)) > 1e-12:
        tau, eta = np.linalg.solve(M, [ys.sum() - 1.0, cs @ ys - alpha])
        q = np.zeros_like(p)
        q[S] = ys - tau - eta * cs
        if np.all(q >= 0):
            return q
    return p


# -- chain QP --------------------------------------------------------------

def _objective(p, d, Rm):
    m = Rm.T @ p
    return float(d @ p - m @ m)


def _kkt_polish(p, d, Rm, c, alpha, tol):
    """Exact solve on the current support; returns p if it certifies KKT."""
    G = Rm @ Rm.T
    supp = np.flatnonzero(p > 1e-9)
    cands = []
    active_now = c @ p > alpha - 1e-9
    for active in ((True, False) if active_now else (False, True)):
        n = supp.size
        extra = 2 if active else 1
        K = np.zeros((n + extra, n + extra))
        K[:n, :n] = 2.0 * G[np.ix_(supp, supp)]
        K[:n, n] = 1.0
        K[n, :n] = 1.0
        rhs = np.zeros(n + extra)
        rhs[:n] = d[supp]
        rhs[n] = 1.0
        if active:
            K[:n, n + 1] = c[supp]
            K[n + 1, :n] = c[supp]
            rhs[n + 1] = alpha
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        q = np.zeros_like(p)
        q[supp] = sol[:n]
        tau = sol[n]
        eta = sol[n + 1] if active else 0.0
        if np.any(q < -1e-13) or eta < -tol:
            continue
        q = np.maximum(q, 0.0)
        q /= q.sum()
        if c @ q > alpha + 1e-12:
            continue
        grad = d - 2.0 * G @ q
        resid = grad - tau - eta * c
        scale = 1.0 + np.abs(d).max()
        if np.abs(resid[supp]).max() > tol * scale * 1e3:
            continue
        if resid.max() > tol * scale:
            continue
        cands.append(q)
    return cands[0] if cands else None


def solve_chain_qp(d, Rm, c, alpha, tol=KKT_TOL, max_iter=MAX_ITER):
    """max d.p - ||Rm^T p||^2 over {p >= 0, sum p = 1, c.p <= alpha}."""
    n = d.size
    if alpha <= 0:
        p = np.zeros(n)
        p[c <= 0] = 1.0
        return p / p.sum()
    L = 2.0 * np.linalg.norm(Rm, 2) ** 2 + 1e-12
    p = _proj_feasible(np.full(n, 1.0 / n), c, alpha)
    for it in range(1, max_iter + 1):
        grad = d - 2.0 * Rm @ (Rm.T @ p)
        target = _proj_feasible(p + grad / L, c, alpha)
        step = target - p
        slope = grad @ step
        Rs = Rm.T @ step
        curv = Rs @ Rs
        t = 1.0 if curv <= 0 else min(1.0, slope / (2.0 * curv))
        p = np.maximum(p + max(t, 0.0) * step, 0.0)
        p /= p.sum()
        if it % 20 == 0 or np.abs(step).max() < 1e-12:
            q = _kkt_polish(p, d, Rm, c, alpha, tol)
            if q is not None:
                return q
    raise NonConvergence("chain QP did not meet the KKT tolerance")


def _chain_data(H, ordering):
    n_T = H.shape[1]
    X = np.zeros((n_T + 1, n_T))
    for k in range(1, n_T + 1):
        X[k, list(ordering[:k])] = 1.0
    R = X @ H.T
    return X, R, np.sum(R ** 2, axis=1), X.sum(axis=1)


def _solution(model, X, p, ordering, alpha):
    keep = p > 1e-12
    probs = p[keep] / p[keep].sum()
    pts = model.A * X[keep]
    Rm = X[keep] @ model.H.T
    mean = probs @ Rm
    val = float(probs @ np.sum(Rm ** 2, axis=1) - mean @ mean)
    power = float(probs @ X[keep].sum(axis=1))
    binding = alpha >= model.n_T / 2.0 or abs(power - alpha) <= 1e-9
    return TraceSolution(val * model.A ** 2, DiscreteInput(pts, probs), tuple(ordering), binding)


def max_trace_chain(model: ChannelModel, ordering) -> TraceSolution:
    ordering = tuple(int(i) for i in ordering)
    if sorted(ordering) != list(range(model.n_T)):
        raise ValueError("ordering must be a permutation of the antennas")
    alpha = effective_alpha(model)
    X, R, d, c = _chain_data(model.H, ordering)
    p = solve_chain_qp(d, R, c, alpha)
    return _solution(model, X, p, ordering, alpha)


def _greedy_orderings(H):
    """Candidate orderings for large n_T: sort antennas along each output
    direction (both signs) and by column norm."""
    U, _, _ = np.linalg.svd(H)
    keys = [np.linalg.norm(H, axis=0)]
    for i in range(U.shape[1]):
        proj = U[:, i] @ H
        keys += [proj, -proj]
    out = []
    for k in keys:
        o = tuple(int(j) for j in np.argsort(-k, kind="stable"))
        if o not in out:
            out.append(o)
    return out


def max_trace(model: ChannelModel, exact_limit=EXACT_ORDERING_LIMIT) -> TraceSolution:
    """Best chain over all antenna orderings (exhaustive up to exact_limit)."""
    if model.n_T <= exact_limit:
        orderings = itertools.permutations(range(model.n_T))
    else:
        orderings = sorted(_greedy_orderings(model.H))
    best = None
    for o in orderings:
        sol = max_trace_chain(model, o)
        if best is None or sol.value > best.value + 1e-10 * (1.0 + abs(best.value)):
            best = sol
    if model.n_R >= 2 and model.n_T <= 12:
        holds, _ = check_R_rank(model)
        if holds and len(best.input.probs) > model.n_R + 2:
            raise NonConvergence("support exceeds n_R + 2 although the rank condition holds")
        best = TraceSolution(best.value, best.input, best.ordering, best.power_binding, holds)
    return best


# -- brute-force oracle -----------------------------------------------------

def brute_force_max_trace(model: ChannelModel, gap_tol=1e-9, max_iter=200_000) -> float:
    """Away-step Frank-Wolfe over PMFs on all binary points (no chain assumption).

    Vertices of the feasible polytope are single points with power <= alpha
    and two-point mixtures meeting the power budget with equality.
    """
    if model.n_T > 10:
        raise TooLarge("n_T above 10")
    alpha = effective_alpha(model)
    X = binary_points(model.n_T)
    Rm = X @ model.H.T
    d = np.sum(Rm ** 2, axis=1)
    c = X.sum(axis=1)
    N = d.size
    low = np.flatnonzero(c <= alpha)
    lo_i = np.flatnonzero(c < alpha)
    hi_j = np.flatnonzero(c > alpha)
    if lo_i.size and hi_j.size:
        ci = c[lo_i][:, None]
        cj = c[hi_j][None, :]
        wj = (alpha - ci) / (cj - ci)
    else:
        wj = np.zeros((0, 0))

    def atom_vec(key):
        v = np.zeros(N)
        if key[0] == "v":
            v[key[1]] = 1.0
        else:
            _, i, j, w = key
            v[i] = 1.0 - w
            v[j] = w
        return v

    def lmo(g):
        k = low[np.argmax(g[low])]
        best_key, best_val = ("v", int(k)), g[k]
        if wj.size:
            vals = g[lo_i][:, None] * (1.0 - wj) + g[hi_j][None, :] * wj
            a, b = np.unravel_index(np.argmax(vals), vals.shape)
            if vals[a, b] > best_val:
                best_key = ("e", int(lo_i[a]), int(hi_j[b]), float(wj[a, b]))
                best_val = vals[a, b]
        return best_key

    start = ("v", 0)
    atoms = {start: 1.0}
    p = atom_vec(start)
    vecs = {start: p.copy()}
    for _ in range(max_iter):
        grad = d - 2.0 * Rm @ (Rm.T @ p)
        fw_key = lmo(grad)
        if fw_key not in vecs:
            vecs[fw_key] = atom_vec(fw_key)
        fw_dir = vecs[fw_key] - p
        gap = grad @ fw_dir
        if gap <= gap_tol:
            return _objective(p, d, Rm) * model.A ** 2
        away_key = min(atoms, key=lambda k: grad @ vecs[k])
        away_dir = p - vecs[away_key]
        if gap >= grad @ away_dir or len(atoms) == 1:
            direction, gmax, is_fw = fw_dir, 1.0, True
        else:
            w = atoms[away_key]
            direction, gmax, is_fw = away_dir, w / (1.0 - w), False
        Rs = Rm.T @ direction
        curv = Rs @ Rs
        slope = grad @ direction
        t = gmax if curv <= 0 else min(gmax, slope / (2.0 * curv))
        if is_fw:
            for k in atoms:
                atoms[k] *= 1.0 - t
            atoms[fw_key] = atoms.get(fw_key, 0.0) + t
        else:
            for k in atoms:
                atoms[k] *= 1.0 + t
            atoms[away_key] -= t
        atoms = {k: w for k, w in atoms.items() if w > 1e-15}
        total = sum(atoms.values())
        atoms = {k: w / total for k, w in atoms.items()}
        p = sum(w * vecs[k] for k, w in atoms.items())
    raise NonConvergence("Frank-Wolfe duality gap above tolerance")


TABLE1 = [
    # H, alpha, reference value (A^2 units), reference PMF (binary string -> prob)
    ([[1.3, 0.6, 1, 0.1], [2.1, 4.5, 0.7, 0.5]], 1.5, 16.3687, {"0000": 0.625, "1111": 0.375}),
    ([[1.3, 0.6, 1, 0.1], [2.1, 4.5, 0.7, 0.5]], 0.9, 12.957, {"0000": 0.7, "1110": 0.3}),
    ([[1.3, 0.6, 1, 0.1], [2.1, 4.5, 0.7, 0.5]], 0.6, 9.9575,
     {"0000": 0.7438, "1100": 0.1687, "1110": 0.0875}),
    ([[1.3, 0.6, 1, 0.1], [2.1, 4.5, 0.7, 0.5]], 0.3, 6.0142, {"0000": 0.85, "1100": 0.15}),
    ([[0.9, 3.2, 1, 2.1], [0.5, 3.5, 1.7, 2.5], [0.7, 1.1, 1.1, 1.3]], 0.9, 23.8405,
     {"0000": 0.7755, "1111": 0.2245}),
    ([[0.9, 3.2, 1, 2.1], [0.5, 3.5, 1.7, 2.5], [0.7, 1.1, 1.1, 1.3]], 0.75, 20.8950,
     {"0000": 0.7772, "1110": 0.1413, "1111": 0.0815}),
    ([[0.9, 3.2, 1, 2.1], [0.5, 3.5, 1.7, 2.5], [0.7, 1.1, 1.1, 1.3]], 0.6, 17.7968,
     {"0000": 0.8, "1110": 0.2}),
]


def pmf_as_dict(inp: DiscreteInput, A=1.0):
    out = {}
    for x, p in zip(inp.points, inp.probs):
        key = "".join("1" if v > 0.5 * A else "0" for v in x)
        out[key] = out.get(key, 0.0) + float(p)
    return out


def total_variation(p: dict, q: dict):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
