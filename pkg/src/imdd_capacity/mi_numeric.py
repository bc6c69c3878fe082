"""Monte-Carlo mutual information of discrete inputs in Gaussian noise and
k-point numerical lower bounds.

I(X; X + Z) = h(Y) - h(Z). Both entropies are estimated with the same
noise draws: every draw Z is reused for every mass point (weighted by its
probability) and paired with -Z. The first-order noise terms then cancel
exactly, which keeps the relative error small even at low SNR. The
reported standard error is the plain sample one and so is conservative.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .maxvar import DiscreteInput
from .zonotope_signaling import Decomposition, min_energy_input

N_SEARCH = 200_000
N_FINAL = 2_000_000
N_STARTS = 8


class DegeneratePMF(ValueError):
    pass


class Infeasible(ValueError):
    pass


@dataclass(frozen=True)
class MIEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    flags: tuple = field(default=())


def _noise(n_samples, n_R, seed):
    """Half the draws; each is used together with its negative. The draws are
    rescaled so their second moment is exactly the identity (moment
    matching), which removes the leading error term at low SNR."""
    half = (n_samples + 1) // 2
    Z = np.random.default_rng(seed).standard_normal((half, n_R))
    L = np.linalg.cholesky(Z.T @ Z / half)
    return np.linalg.solve(L, Z.T).T


def _pair_terms(points, logp, p, Z, chunk=100_000):
    """Per-pair average of sum_k p_k [log phi(Z) - log f(x_k + Z)] over (Z, -Z)."""
    diffs = points[:, None, :] - points[None, :, :]  # (k, j, n_R): x_k - x_j
    out = np.empty(len(Z))
    for start in range(0, len(Z), chunk):
        Zc = Z[start:start + chunk]
        acc = np.zeros(len(Zc))
        for sign in (1.0, -1.0):
            W = sign * Zc
            base = -0.5 * np.sum(W ** 2, axis=1)
            for k in range(len(points)):
                D = W[:, None, :] + diffs[k][None, :, :]
                lf = logsumexp(logp[None, :] - 0.5 * np.sum(D ** 2, axis=2), axis=1)
                acc += p[k] * (base - lf)
        out[start:start + chunk] = 0.5 * acc
    return out


def mi_discrete_gaussian(points, probs, n_samples=N_SEARCH, seed=0, noise=None) -> MIEstimate:
    """Mutual information (nats) between a discrete input on points and its
    observation in unit-variance Gaussian noise."""
    if n_samples < 10_000 and noise is None:
        raise ValueError("n_samples must be at least 1e4")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or len(probs) != len(points) or np.any(probs < 0) or probs.sum() <= 0:
        raise DegeneratePMF("probabilities must be a nonnegative vector matching the points")
    flags = ()
    keep = probs >= 1e-15
    if not keep.all():
        flags = ("dropped_tiny_mass",)
    points, probs = points[keep], probs[keep] / probs[keep].sum()
    if abs(probs.sum() - 1.0) > 1e-12:
        raise DegeneratePMF("probabilities do not sum to one")
    if len(points) == 1:
        return MIEstimate(0.0, 0.0, n_samples, seed, flags)
    Z = _noise(n_samples, points.shape[1], seed) if noise is None else noise
    g = _pair_terms(points, np.log(probs), probs, Z)
    se = float(g.std(ddof=1) / math.sqrt(len(g)))
    return MIEstimate(float(g.mean()), se, 2 * len(g), seed, flags)


@dataclass(frozen=True)
class _Layout:
    k: int
    n_T: int

    def unpack(self, theta, A):
        m = self.k - 1
        X = A * np.clip(theta[: m * self.n_T].reshape(m, self.n_T), 0.0, 1.0)
        logits = np.concatenate([[0.0], theta[m * self.n_T:]])
        w = np.exp(logits - logits.max())
        return X, w / w.sum()


def _feasible_input(decomp: Decomposition, layout, theta, alpha):
    """Map parameters to a PMF meeting the power budget by moving mass to 0."""
    A = decomp.A
    X, p = layout.unpack(theta, A)
    xbars = X @ decomp.H.T
    X_min = []
    energies = []
    for xb in xbars:
        r = min_energy_input(decomp, xb)
        X_min.append(r.x_min)
        energies.append(r.energy)
    energies = np.array(energies)
    power = p[1:] @ energies
    budget = alpha * A
    if power > budget:
        p = p.copy()
        p[1:] *= budget / power
        p[0] = 1.0 - p[1:].sum()
    pts = np.vstack([np.zeros(decomp.n_T), np.array(X_min)])
    xb_all = np.vstack([np.zeros(decomp.n_R), xbars])
    return pts, xb_all, p


def k_point_lower_bound(decomp: Decomposition, alpha, k, budget=600, seed=0,
                        n_search=N_SEARCH, n_final=N_FINAL, n_starts=N_STARTS):
    """Best k-point input found by multi-start Nelder-Mead, one point pinned at 0.

    budget is the function-evaluation cap per start. The reported estimate
    uses fresh noise (seed + 1) so it is not biased by the search.
    Returns (MIEstimate, DiscreteInput).
    """
    if k < 2:
        raise Infeasible("need at least two mass points")
    if alpha <= 0:
        raise Infeasible("zero power budget admits only the origin")
    layout = _Layout(k, decomp.n_T)
    A = decomp.A
    scale = min(1.0, A ** 2)
    noise = _noise(n_search, decomp.n_R, seed)
    rng = np.random.default_rng(seed)

    def objective(theta):
        _, xb, p = _feasible_input(decomp, layout, theta, alpha)
        return -mi_discrete_gaussian(xb, p, noise=noise).value / scale

    best = None
    exhausted = False
    dim = (k - 1) * (decomp.n_T + 1)
    for _ in range(n_starts):
        theta0 = np.concatenate([rng.random((k - 1) * decomp.n_T), rng.normal(size=k - 1)])
        res = minimize(objective, theta0, method="Nelder-Mead",
                       options={"maxfev": budget, "xatol": 1e-4, "fatol": 1e-7,
                                "initial_simplex": _simplex(theta0, dim)})
        exhausted |= not res.success
        if best is None or res.fun < best.fun:
            best = res
    pts, xb, p = _feasible_input(decomp, layout, best.x, alpha)
    est = mi_discrete_gaussian(xb, p, n_final, seed + 1)
    flags = est.flags + (("budget_exhausted",) if exhausted else ())
    est = MIEstimate(est.value, est.std_error, est.n_samples, est.seed, flags)
    keep = p > 0
    return est, DiscreteInput(pts[keep], p[keep])


def _simplex(theta0, dim):
    S = np.tile(theta0, (dim + 1, 1))
    for i in range(dim):
        S[i + 1, i] += 0.25 if i < len(theta0) else 1.0
    return S
