"""Minimum-energy tiling of the zonotope R(H) = {Hx : x in [0,A]^n_T}.

Each basis set U of n_R independent columns contributes one
parallelepiped v_U + H_U [0,A]^n_R. Inside it the cheapest preimage
puts the non-basis antennas at 0 or A (the g pattern) and solves for
the basis antennas.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel_core import ChannelModel, require_canonical

TOL_DET = 1e-12
TOL_TIE = 1e-9
TOL_BOX = 1e-9
TOL_BOX_LOOSE = 1e-6


class NoBasis(ValueError):
    pass


class OutsideZonotope(ValueError):
    pass


class Infeasible(ValueError):
    pass


@dataclass(frozen=True)
class BasisCell:
    U: tuple            # 0-based sorted column indices
    H_U: np.ndarray
    H_U_inv: np.ndarray
    det_abs: float
    gamma: np.ndarray   # n_R x n_T, column j is H_U^{-1} h_j
    a: np.ndarray       # column sums of gamma
    g: np.ndarray       # 0/1 per antenna, zero on U
    v: np.ndarray
    s: int
    q: float
    sigma: np.ndarray
    tie: bool = False

    @property
    def complement(self):
        return tuple(j for j in range(self.g.size) if j not in self.U)


@dataclass(frozen=True)
class Decomposition:
    cells: tuple
    V_H: float
    alpha_th: float
    A: float
    H: np.ndarray

    @property
    def n_R(self):
        return self.H.shape[0]

    @property
    def n_T(self):
        return self.H.shape[1]

    @property
    def q(self):
        return np.array([c.q for c in self.cells])

    @property
    def s(self):
        return np.array([c.s for c in self.cells], dtype=float)

    def with_amplitude(self, A):
        """Same tiling at another peak amplitude (offsets scale with A)."""
        cells = tuple(
            BasisCell(c.U, c.H_U, c.H_U_inv, c.det_abs, c.gamma, c.a, c.g,
                      c.v * (A / self.A), c.s, c.q, c.sigma, c.tie)
            for c in self.cells)
        return Decomposition(cells, self.V_H, self.alpha_th, float(A), self.H)


@dataclass(frozen=True)
class MinEnergyResult:
    x_min: np.ndarray
    cell_index: int
    beta: np.ndarray
    energy: float


def enumerate_bases(model: ChannelModel, tol_det=TOL_DET):
    require_canonical(model)
    H = model.H
    n_R, n_T = H.shape
    scale = np.linalg.norm(H, axis=0).max() ** n_R
    bases = []
    for U in itertools.combinations(range(n_T), n_R):
        if abs(np.linalg.det(H[:, U])) > tol_det * scale:
            bases.append(U)
    if not bases:
        raise NoBasis("no set of n_R independent columns")
    return bases


def _g_pattern(U, gamma, a, tol_tie):
    """0/1 choice for each non-basis antenna.

    Away from ties g = 1 iff a > 1. A tie a = 1 is resolved as if the
    smallest index among U and j were scaled up by a vanishing amount:
    for j below min(U) the tie goes to 1; otherwise it goes to 1 iff the
    coefficient of h_{min U} in gamma[:, j] is negative.
    """
    n_T = a.size
    g = np.zeros(n_T, dtype=int)
    tie = False
    for j in range(n_T):
        if j in U:
            continue
        if abs(a[j] - 1.0) > tol_tie:
            g[j] = int(a[j] > 1.0)
            continue
        tie = True
        if j < U[0]:
            g[j] = 1
        else:
            g[j] = int(gamma[0, j] < 0.0)
    return g, tie


def build_decomposition(model: ChannelModel, tol_tie=TOL_TIE, tol_det=TOL_DET) -> Decomposition:
    H = model.H
    A = model.A
    bases = enumerate_bases(model, tol_det)
    raw = []
    for U in bases:
        H_U = H[:, U]
        H_U_inv = np.linalg.inv(H_U)
        gamma = H_U_inv @ H
        gamma[:, list(U)] = np.eye(len(U))
        a = gamma.sum(axis=0)
        g, tie = _g_pattern(U, gamma, a, tol_tie)
        v = A * (H @ g)
        sigma = np.sqrt(np.sum(H_U_inv ** 2, axis=1))
        raw.append((U, H_U, H_U_inv, abs(np.linalg.det(H_U)), gamma, a, g, v, int(g.sum()), sigma, tie))
    V_H = sum(r[3] for r in raw)
    cells = []
    for (U, H_U, H_U_inv, d, gamma, a, g, v, s, sigma, tie) in raw:
        for arr in (H_U, H_U_inv, gamma, a, g, v, sigma):
            arr.setflags(write=False)
        cells.append(BasisCell(U, H_U, H_U_inv, d, gamma, a, g, v, s, d / V_H, sigma, tie))
    alpha_th = model.n_R / 2.0 + sum(c.s * c.q for c in cells)
    return Decomposition(tuple(cells), float(V_H), float(alpha_th), float(A), model.H)


def _betas(decomp: Decomposition, xbar):
    return [c.H_U_inv @ (xbar - c.v) for c in decomp.cells]


def locate(decomp: Decomposition, xbar) -> int:
    """Index of the first cell (lexicographic U) whose box contains xbar."""
    xbar = np.asarray(xbar, dtype=float)
    A = decomp.A
    betas = _betas(decomp, xbar)
    for tol in (TOL_BOX, TOL_BOX_LOOSE):
        t = tol * max(A, 1.0)
        for i, b in enumerate(betas):
            if np.all(b >= -t) and np.all(b <= A + t):
                return i
    raise OutsideZonotope(f"{xbar} is not in R(H)")


def locate_counts(decomp: Decomposition, xbars, tol=TOL_BOX):
    """For each row of xbars, the number of cells containing it."""
    xbars = np.atleast_2d(np.asarray(xbars, dtype=float))
    A = decomp.A
    t = tol * max(A, 1.0)
    counts = np.zeros(len(xbars), dtype=int)
    for c in decomp.cells:
        B = (xbars - c.v) @ c.H_U_inv.T
        counts += np.all((B >= -t) & (B <= A + t), axis=1)
    return counts


def min_energy_input(decomp: Decomposition, xbar) -> MinEnergyResult:
    xbar = np.asarray(xbar, dtype=float)
    i = locate(decomp, xbar)
    c = decomp.cells[i]
    A = decomp.A
    beta = c.H_U_inv @ (xbar - c.v)
    x = A * c.g.astype(float)
    x[list(c.U)] = np.clip(beta, 0.0, A)
    return MinEnergyResult(x, i, beta, float(np.sum(np.abs(x))))


# -- LP oracle ------------------------------------------------------------

def _revised_simplex(c, A, b, basis, tol=1e-11, max_iter=5000):
    """Bland-rule revised simplex for min c.z, A z = b, z >= 0 from a feasible basis."""
    m, n = A.shape
    basis = list(basis)
    for _ in range(max_iter):
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        red = c - A.T @ y
        red[basis] = 0.0
        entering = np.flatnonzero(red < -tol * (1.0 + np.abs(c).max()))
        if entering.size == 0:
            return basis, xB
        e = int(entering[0])
        d = np.linalg.solve(B, A[:, e])
        rows = np.flatnonzero(d > tol)
        if rows.size == 0:
            raise Infeasible("LP is unbounded")
        ratios = np.maximum(xB[rows], 0.0) / d[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * (1.0 + best)]
        leave = min(ties, key=lambda r: basis[r])
        basis[leave] = e
    raise RuntimeError("simplex iteration cap reached")


def solve_standard_lp(c, A, b, tol=1e-11):
    """Two-phase simplex for min c.z subject to A z = b, z >= 0."""
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1 with artificials
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis, xB = _revised_simplex(c1, A1, b, list(range(n, n + m)), tol)
    infeas = float(c1[basis] @ xB)
    if infeas > 1e-9 * (1.0 + np.abs(b).max()):
        raise Infeasible(f"no feasible point (phase-1 residual {infeas:.3e})")

    # pivot remaining artificials out, drop redundant rows
    rows = list(range(m))
    k = 0
    while k < len(basis):
        if basis[k] < n:
            k += 1
            continue
        B = A1[np.ix_(rows, basis)]
        row_k = np.linalg.solve(B.T, np.eye(len(rows))[k])  # k-th row of B^{-1}
        alpha_row = row_k @ A[rows]
        cand = [j for j in range(n) if j not in basis and abs(alpha_row[j]) > 1e-9]
        if cand:
            basis[k] = cand[0]
            k += 1
        else:
            art = basis[k] - n
            rows.remove(art)
            del basis[k]
    A2 = A[rows]
    b2 = b[rows]
    basis, xB = _revised_simplex(c, A2, b2, basis, tol)
    z = np.zeros(n)
    z[basis] = xB
    return z


def lp_oracle_min_energy(model: ChannelModel, xbar):
    """min ||x||_1 subject to Hx = xbar, 0 <= x <= A (independent of the tiling)."""
    H = model.H
    A = model.A
    n_R, n_T = H.shape
    xbar = np.asarray(xbar, dtype=float)
    Aeq = np.block([[H, np.zeros((n_R, n_T))], [np.eye(n_T), np.eye(n_T)]])
    beq = np.concatenate([xbar, np.full(n_T, A)])
    cost = np.concatenate([np.ones(n_T), np.zeros(n_T)])
    z = solve_standard_lp(cost, Aeq, beq)
    x = np.clip(z[:n_T], 0.0, A)
    return x, float(x.sum())


# -- volume ---------------------------------------------------------------

def _facet_normals(H):
    """Normals orthogonal to each (n_R-1)-subset of independent columns."""
    n_R, n_T = H.shape
    if n_R == 1:
        return np.ones((1, 1))
    normals = []
    for S in itertools.combinations(range(n_T), n_R - 1):
        M = H[:, S].T
        _, sv, Vt = np.linalg.svd(M)
        if sv.min() <= 1e-12 * sv.max():
            continue
        w = Vt[-1]
        normals.append(w / np.linalg.norm(w))
    return np.array(normals)


def zonotope_membership(model: ChannelModel, points):
    """Support-function test y in R(H) against every facet direction."""
    H = model.H
    A = model.A
    W = _facet_normals(H)
    proj = W @ H                                   # (m, n_T)
    upper = A * np.maximum(proj, 0.0).sum(axis=1)
    lower = A * np.minimum(proj, 0.0).sum(axis=1)
    P = np.atleast_2d(points) @ W.T
    return np.all((P <= upper) & (P >= lower), axis=1)


def _lp_member(model, y):
    try:
        lp_oracle_min_energy(model, y)
        return True
    except Infeasible:
        return False


def zonotope_volume_mc(model: ChannelModel, n_samples: int, seed: int, method="support",
                       chunk=200_000):
    """Hit-or-miss volume of R(H) inside its bounding box.

    method="lp" decides membership with the LP oracle (slow, exact);
    method="support" uses the support-function test.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    H = model.H
    A = model.A
    lo = A * np.minimum(H, 0.0).sum(axis=1)
    hi = A * np.maximum(H, 0.0).sum(axis=1)
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        Y = lo + (hi - lo) * rng.random((m, H.shape[0]))
        if method == "lp":
            hits += sum(_lp_member(model, y) for y in Y)
        else:
            hits += int(zonotope_membership(model, Y).sum())
        done += m
    f = hits / n_samples
    return box * f, box * math.sqrt(f * (1.0 - f) / n_samples)


def cell_vertices(decomp: Decomposition, i):
    """Corner list of cell i (2-D: counter-clockwise around the parallelogram)."""
    c = decomp.cells[i]
    A = decomp.A
    n = len(c.U)
    if n == 2:
        corners = np.array([[0, 0], [A, 0], [A, A], [0, A]], dtype=float)
    else:
        corners = A * np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    return corners @ c.H_U.T + c.v


def sample_uniform_cost(decomp: Decomposition, n_samples, seed):
    """Cost A s_U + sum(beta) for xbar uniform on R(H).

    Cell i is chosen with probability q_i and beta uniform on its box.
    Returns (mean, std_error).
    """
    rng = np.random.default_rng(seed)
    A = decomp.A
    idx = rng.choice(len(decomp.cells), size=n_samples, p=decomp.q)
    beta_sum = A * rng.random((n_samples, decomp.n_R)).sum(axis=1)
    cost = A * decomp.s[idx] + beta_sum
    return float(cost.mean()), float(cost.std(ddof=1) / math.sqrt(n_samples))
