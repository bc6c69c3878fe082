"""Analytic capacity bounds and asymptotics, all in nats.

Lower bounds come from the entropy power inequality applied to a uniform
or truncated-exponential input on each parallelepiped of the tiling. Upper
bounds come from a genie that reveals which parallelepiped was used, and
from the maximum covariance trace.

Bounds with an inner supremum over cell weights p and an outer infimum
over dual parameters are evaluated as inf-sup. The objective is concave in
p and convex in the dual parameters, so this matches the sup-inf form for
the single-parameter bound and is never smaller for the two-parameter one.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, logsumexp

from .channel_core import ChannelModel, effective_alpha, require_canonical
from .maxvar import max_trace
from .zonotope_signaling import Decomposition

LOG_2PIE = math.log(2.0 * math.pi * math.e)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2PIE = math.sqrt(2.0 * math.pi * math.e)

GOLDEN_TOL = 1e-8
LAMBDA_INSET = 1e-9
LOG_MU_RANGE = (-20.0, 20.0)
CD_ROUNDS = 50
CD_TOL = 1e-9


class OutOfRange(ValueError):
    pass


class Unreachable(ValueError):
    pass


class EmptyInterval(ValueError):
    pass


def golden_section_min(f, lo, hi, tol=GOLDEN_TOL, max_iter=200):
    """Minimize a unimodal f on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    best = min(((f1, x1), (f2, x2), (f(lo), lo), (f(hi), hi)))
    return best[1], best[0]


def _mean_excess(mu):
    """1/mu - e^{-mu}/(1 - e^{-mu}), the mean of a unit-peak truncated exponential."""
    if mu < 1e-3:
        return 0.5 - mu / 12.0 + mu ** 3 / 720.0 - mu ** 5 / 30240.0
    if mu > 700.0:
        return 1.0 / mu
    return 1.0 / mu - 1.0 / math.expm1(mu)


def solve_mu(lambda_over_nr: float) -> float:
    t = float(lambda_over_nr)
    if not 0.0 < t < 0.5:
        raise OutOfRange("argument must lie in (0, 1/2)")
    lo, hi = 1e-8, 1e8
    while _mean_excess(lo) < t:
        lo /= 10.0
    while _mean_excess(hi) > t:
        hi *= 10.0
    a, b = math.log(lo), math.log(hi)
    for _ in range(400):
        m = 0.5 * (a + b)
        if _mean_excess(math.exp(m)) > t:
            a = m
        else:
            b = m
        if b - a < 1e-15:
            break
    return math.exp(0.5 * (a + b))


def truncated_exp_entropy_gap(mu):
    """Differential entropy of a unit-peak truncated exponential minus log 1.

    Equals 1 - log(mu/(1-e^{-mu})) - mu e^{-mu}/(1-e^{-mu}); zero as mu -> 0.
    """
    if mu < 1e-6:
        return -mu ** 2 / 24.0
    tail = mu * math.exp(-mu) if mu > 700.0 else mu / math.expm1(mu)
    return 1.0 - math.log(mu / -math.expm1(-mu)) - tail


@dataclass(frozen=True)
class SimplexWeights:
    w: np.ndarray


def _tilt(logq, s, theta):
    z = logq + theta * s
    lse = logsumexp(z)
    p = np.exp(z - lse)
    return p, lse


def kl_project(q, s, target, tol=1e-12):
    """min D(p||q) subject to sum p s = target; returns (p, divergence)."""
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    smin, smax = s.min(), s.max()
    span = max(smax - smin, 1.0)
    if target < smin - tol * span or target > smax + tol * span:
        raise Unreachable(f"target {target} outside [{smin}, {smax}]")
    logq = np.log(q)
    if smax - smin <= tol:
        return q.copy(), 0.0
    for edge in (smin, smax):
        if abs(target - edge) <= tol * span:
            mask = np.abs(s - edge) <= tol * span
            p = np.where(mask, q, 0.0)
            mass = p.sum()
            return p / mass, -math.log(mass)
    mean0 = q @ s
    if abs(target - mean0) <= tol * span:
        return q.copy(), 0.0

    def moments(theta):
        p, _ = _tilt(logq, s, theta)
        m = p @ s
        return m, p @ (s - m) ** 2

    # bracket, then safeguarded Newton on the increasing tilted mean
    if target > mean0:
        lo, hi = 0.0, 1.0
        while moments(hi)[0] < target:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = -1.0, 0.0
        while moments(lo)[0] > target:
            lo, hi = 2.0 * lo, lo
    theta = 0.5 * (lo + hi)
    for _ in range(300):
        m, var = moments(theta)
        g = m - target
        if abs(g) < 0.1 * tol:
            break
        if g < 0:
            lo = theta
        else:
            hi = theta
        step = theta - g / var if var > 0 else 0.5 * (lo + hi)
        theta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(theta)):
            break
    p, lse = _tilt(logq, s, theta)
    div = float(theta * (p @ s) - lse)
    return p, max(div, 0.0)


def _lambda_interval(decomp, alpha):
    n_R = decomp.n_R
    lo = max(0.0, n_R / 2.0 + alpha - decomp.alpha_th)
    hi = min(n_R / 2.0, alpha)
    return lo, hi


def nu_objective(decomp: Decomposition, alpha, lam):
    """Entropy gain of the truncated exponential minus the KL projection cost."""
    n_R = decomp.n_R
    mu = solve_mu(lam / n_R)
    _, div = kl_project(decomp.q, decomp.s, alpha - lam)
    return n_R * truncated_exp_entropy_gap(mu) - div


def nu(decomp: Decomposition, alpha, tol=GOLDEN_TOL) -> float:
    if alpha >= decomp.alpha_th:
        raise EmptyInterval("alpha is at or above the threshold")
    lo, hi = _lambda_interval(decomp, alpha)
    lo, hi = lo + LAMBDA_INSET, hi - LAMBDA_INSET
    if hi <= lo:
        raise EmptyInterval("empty lambda interval")
    _, val = golden_section_min(lambda lam: -nu_objective(decomp, alpha, lam), lo, hi, tol)
    return -val


def _log_det_term(decomp, A):
    return 2.0 * decomp.n_R * math.log(A) + 2.0 * math.log(decomp.V_H) - decomp.n_R * LOG_2PIE


def lower_bound_epi_uniform(decomp: Decomposition) -> float:
    x = _log_det_term(decomp, decomp.A)
    return 0.5 * float(np.logaddexp(0.0, x))


def lower_bound_epi_exponential(decomp: Decomposition, alpha, nu_value=None) -> float:
    if nu_value is None:
        nu_value = nu(decomp, alpha)
    x = _log_det_term(decomp, decomp.A) + 2.0 * nu_value
    return 0.5 * float(np.logaddexp(0.0, x))


def _cells_arrays(decomp):
    sig = np.array([c.sigma for c in decomp.cells])  # (cells, n_R)
    return np.log(decomp.q), decomp.s, sig


def upper_bound_peak(decomp: Decomposition) -> float:
    logq, _, sig = _cells_arrays(decomp)
    c = np.log(sig + decomp.A / SQRT_2PIE).sum(axis=1)
    return math.log(decomp.V_H) + float(logsumexp(logq + c))


def _sup_over_weights(logq, s, c, mu, alpha):
    """sup_p { -D(p||q) + p.c + mu (alpha - p.s) } subject to p.s <= alpha.

    Solved through the dual multiplier eta >= 0 on the constraint; the
    maximizer is p ∝ q exp(c - (mu + eta) s). The dual value at any
    eta >= 0 is itself an upper bound, so an inexact eta stays valid.
    """
    z0 = logq + c - mu * s

    def moments(eta):
        z = z0 - eta * s
        zmax = z.max()
        w = np.exp(z - zmax)
        tot = w.sum()
        m1 = (w @ s) / tot
        m2 = (w @ (s * s)) / tot
        return zmax + math.log(tot), m1, m2 - m1 * m1

    lse, m, var = moments(0.0)
    if m <= alpha:
        return lse + mu * alpha
    # safeguarded Newton on tilted_mean(eta) = alpha
    lo, hi = 0.0, 1.0
    while moments(hi)[1] > alpha:
        lo, hi = hi, 2.0 * hi
    eta = lo
    for _ in range(100):
        lse, m, var = moments(eta)
        g = m - alpha
        if abs(g) <= 1e-14 * (1.0 + alpha):
            break
        if g > 0:
            lo = eta
        else:
            hi = eta
        step = eta + g / var if var > 0 else 0.5 * (lo + hi)
        eta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    lse, m, var = moments(eta)
    return lse + (mu + eta) * alpha


def _c_mu(sig, A, mu):
    shrink = -math.expm1(-mu) / mu if mu > 1e-12 else 1.0 - mu / 2.0
    tail = sig * -np.expm1(-A ** 2 / (2.0 * sig ** 2))
    return (np.log(sig + A / SQRT_2PIE * shrink).sum(axis=1)
            + mu / (A * SQRT_2PI) * tail.sum(axis=1))


def upper_bound_mu_objective(decomp: Decomposition, alpha, mu) -> float:
    logq, s, sig = _cells_arrays(decomp)
    c = _c_mu(sig, decomp.A, mu)
    return math.log(decomp.V_H) + _sup_over_weights(logq, s, c, mu, alpha)


def upper_bound_mu(decomp: Decomposition, alpha, tol=GOLDEN_TOL):
    logq, s, sig = _cells_arrays(decomp)
    logV = math.log(decomp.V_H)
    A = decomp.A

    def f(logmu):
        mu = math.exp(logmu)
        return logV + _sup_over_weights(logq, s, _c_mu(sig, A, mu), mu, alpha)

    _, val = golden_section_min(f, *LOG_MU_RANGE, tol=tol)
    return val


def _c_mu_delta(sig, A, mu, delta):
    x = delta / sig
    gauss = np.exp(-0.5 * x ** 2)
    log_num = mu * delta / A + math.log(-math.expm1(-mu * (1.0 + 2.0 * delta / A)))
    term = (math.log(A / (SQRT_2PIE * mu)) + log_num - np.log(erf(x / math.sqrt(2.0)))
            + 0.5 * erfc(x / math.sqrt(2.0))
            + x / SQRT_2PI * gauss
            + mu * sig / (A * SQRT_2PI) * (gauss - np.exp(-0.5 * ((A + delta) / sig) ** 2)))
    return term.sum(axis=1)


def upper_bound_mu_delta_objective(decomp, alpha, mu, delta):
    logq, s, sig = _cells_arrays(decomp)
    c = _c_mu_delta(sig, decomp.A, mu, delta)
    return math.log(decomp.V_H) + _sup_over_weights(logq, s, c, mu, alpha)


def upper_bound_mu_delta(decomp: Decomposition, alpha, tol=GOLDEN_TOL, rounds=CD_ROUNDS):
    """Coordinate descent over (log delta, log mu), golden section per coordinate."""
    logq, s, sig = _cells_arrays(decomp)
    logV = math.log(decomp.V_H)
    A = decomp.A
    # delta spans from far below the noise scale to well beyond the peak
    ld_lo = math.log(1e-6 * sig.min())
    ld_hi = math.log(A + 40.0 * sig.max())

    def f(ld, lm):
        mu, delta = math.exp(lm), math.exp(ld)
        c = _c_mu_delta(sig, A, mu, delta)
        return logV + _sup_over_weights(logq, s, c, mu, alpha)

    lm, ld = 0.0, math.log(sig.mean())
    best = f(ld, lm)
    width_d, width_m = ld_hi - ld_lo, LOG_MU_RANGE[1] - LOG_MU_RANGE[0]
    for _ in range(rounds):
        prev = best
        ld, lm, best, width_d, width_m = _cd_round(f, ld, lm, best, (ld_lo, ld_hi), width_d,
                                                   width_m, tol)
        if prev - best < CD_TOL:
            break
    return best


def _line_search(g, x0, f0, bounds, width, tol):
    """Golden section on a window around x0, widened to the full range if the
    minimizer lands on the window edge."""
    lo_b, hi_b = bounds
    lo, hi = max(lo_b, x0 - width), min(hi_b, x0 + width)
    x, v = golden_section_min(g, lo, hi, tol)
    if (x - lo < 1e-3 * width and lo > lo_b) or (hi - x < 1e-3 * width and hi < hi_b):
        x, v = golden_section_min(g, lo_b, hi_b, tol)
    if v > f0:
        return x0, f0
    return x, v


def _cd_round(f, ld, lm, best, ld_bounds, width_d, width_m, tol):
    ld_new, best = _line_search(lambda x: f(x, lm), ld, best, ld_bounds, width_d, tol)
    lm_new, best = _line_search(lambda y: f(ld_new, y), lm, best, LOG_MU_RANGE, width_m, tol)
    width_d = max(4.0 * abs(ld_new - ld), 1e-3)
    width_m = max(4.0 * abs(lm_new - lm), 1e-3)
    return ld_new, lm_new, best, width_d, width_m


def upper_bound_trace(model: ChannelModel, trace_value=None) -> float:
    """trace_value, if given, is the max trace at A = 1 (it scales with A^2)."""
    require_canonical(model)
    if trace_value is None:
        trace_value = max_trace(model.with_amplitude(1.0)).value
    n_R = model.n_R
    return n_R / 2.0 * math.log1p(trace_value * model.A ** 2 / n_R)


def high_snr_asymptote(decomp: Decomposition, alpha, nu_value=None) -> float:
    base = 0.5 * (2.0 * math.log(decomp.V_H) - decomp.n_R * LOG_2PIE)
    if alpha >= decomp.alpha_th:
        return base
    if nu_value is None:
        nu_value = nu(decomp, alpha)
    return base + nu_value


def low_snr_slope(model: ChannelModel) -> float:
    require_canonical(model)
    return 0.5 * max_trace(model.with_amplitude(1.0)).value


@dataclass(frozen=True)
class BoundReport:
    A_linear: float
    A_dB: float
    lb_uniform: float
    lb_exp: float
    ub_peak: float
    ub_mu: float
    ub_mu_delta: float
    ub_trace: float
    nu: float
    alpha_used: float

    @property
    def lower(self):
        return [v for v in (self.lb_uniform, self.lb_exp) if not math.isnan(v)]

    @property
    def upper(self):
        return [v for v in (self.ub_peak, self.ub_mu, self.ub_mu_delta, self.ub_trace)
                if not math.isnan(v)]

    def ordering_ok(self, slack=1e-6):
        return max(self.lower) <= min(self.upper) + slack


def db_to_linear(A_dB):
    return 10.0 ** (A_dB / 10.0)


def bound_report(model: ChannelModel, decomp_unit: Decomposition, A_dB, alpha,
                 nu_value=None, trace_value=None) -> BoundReport:
    """All bounds at one amplitude.

    decomp_unit is the tiling built at any amplitude; it is rescaled here.
    nu_value and trace_value may be passed in to reuse per-alpha work.
    """
    require_canonical(model)
    A = db_to_linear(A_dB)
    a_used = min(alpha, model.n_T / 2.0)
    decomp = decomp_unit.with_amplitude(A)
    if trace_value is None:
        trace_value = max_trace(model.with_amplitude(1.0).with_alpha(a_used)).value
    nan = float("nan")
    if a_used < decomp.alpha_th:
        if nu_value is None:
            nu_value = nu(decomp, a_used)
        lb_u = nan
        lb_e = lower_bound_epi_exponential(decomp, a_used, nu_value)
        ub_m = upper_bound_mu(decomp, a_used)
        ub_md = upper_bound_mu_delta(decomp, a_used)
    else:
        nu_value = nan
        lb_u = lower_bound_epi_uniform(decomp)
        lb_e = ub_m = ub_md = nan
    return BoundReport(
        A_linear=A, A_dB=float(A_dB),
        lb_uniform=lb_u, lb_exp=lb_e,
        ub_peak=upper_bound_peak(decomp),
        ub_mu=ub_m, ub_mu_delta=ub_md,
        ub_trace=upper_bound_trace(model.with_amplitude(A), trace_value),
        nu=nu_value, alpha_used=a_used)


__all__ = [
    "solve_mu", "kl_project", "nu", "lower_bound_epi_uniform", "lower_bound_epi_exponential",
    "upper_bound_peak", "upper_bound_mu", "upper_bound_mu_delta", "upper_bound_trace",
    "high_snr_asymptote", "low_snr_slope", "BoundReport", "bound_report", "SimplexWeights",
    "effective_alpha", "golden_section_min",
]
