"""Channel instances for the MIMO intensity channel Y = Hx + Z.

Validation, reduction to the canonical form n_T > n_R = rank(H), and
normalization of the average-power ratio.
"""

import json
from dataclasses import dataclass, field

import numpy as np

TOL_RANK = 1e-10


class ChannelError(ValueError):
    pass


class ZeroMatrix(ChannelError):
    pass


class NonPositivePower(ChannelError):
    pass


class NotPositiveDefinite(ChannelError):
    pass


class DegenerateChannel(ChannelError):
    pass


class SquareFullRank(ChannelError):
    """Raised by bound computations on an invertible square channel."""


@dataclass(frozen=True)
class ChannelModel:
    H: np.ndarray
    A: float
    alpha: float
    status: str = "canonical"  # canonical | needs_reduction | square_full_rank
    tol_rank: float = TOL_RANK

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def n_R(self) -> int:
        return self.H.shape[0]

    @property
    def n_T(self) -> int:
        return self.H.shape[1]

    @property
    def canonical(self) -> bool:
        return self.status == "canonical"

    def with_amplitude(self, A: float) -> "ChannelModel":
        return ChannelModel(self.H, A, self.alpha, self.status, self.tol_rank)

    def with_alpha(self, alpha: float) -> "ChannelModel":
        return ChannelModel(self.H, self.A, alpha, self.status, self.tol_rank)


@dataclass(frozen=True)
class ReductionReport:
    original_rank: int
    transform: np.ndarray
    reduced: ChannelModel
    whitened: bool = False
    square_full_rank: bool = False
    noise_transform: np.ndarray = field(default=None, repr=False)


def numerical_rank(H, tol_rank=TOL_RANK) -> int:
    sv = np.linalg.svd(np.atleast_2d(H), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol_rank * sv[0]))


def _check_power(A, alpha):
    if not (np.isfinite(A) and A > 0):
        raise NonPositivePower(f"peak amplitude must be positive, got {A}")
    if not (np.isfinite(alpha) and alpha >= 0):
        raise NonPositivePower(f"power ratio must be nonnegative, got {alpha}")


def validate_channel(H, A, alpha, tol_rank=TOL_RANK) -> ChannelModel:
    """Wrap H into a ChannelModel and flag whether it is canonical.

    alpha = 0 is accepted as a degenerate edge case (all mass at the origin).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.size == 0:
        raise ChannelError("empty channel matrix")
    if not np.all(np.isfinite(H)):
        raise ChannelError("channel matrix has non-finite entries")
    _check_power(A, alpha)
    r = numerical_rank(H, tol_rank)
    if r == 0:
        raise ZeroMatrix("all singular values are below tolerance")
    n_R, n_T = H.shape
    if n_T > n_R and r == n_R:
        status = "canonical"
    elif n_T == n_R == r:
        status = "square_full_rank"
    else:
        status = "needs_reduction"
    return ChannelModel(H, float(A), float(alpha), status, tol_rank)


def reduce_channel(model: ChannelModel, noise_cov=None) -> ReductionReport:
    """Whiten (optional) and project the outputs onto the row space of H."""
    H = np.array(model.H, dtype=float)
    S_inv_T = None
    if noise_cov is not None:
        K = np.asarray(noise_cov, dtype=float)
        if K.shape != (H.shape[0], H.shape[0]) or not np.allclose(K, K.T, atol=1e-12):
            raise NotPositiveDefinite("noise covariance must be symmetric n_R x n_R")
        try:
            L = np.linalg.cholesky(K)  # K = L L^T, S = L^T upper triangular
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        # S^{-T} = L^{-1}
        S_inv_T = np.linalg.solve(L, np.eye(K.shape[0]))
        H = S_inv_T @ H

    r = numerical_rank(H, model.tol_rank)
    if r == 0:
        raise DegenerateChannel("channel has rank 0")

    n_R, n_T = H.shape
    if r == n_R and n_T > n_R:
        # already canonical: identity reduction
        T = np.eye(n_R)
    else:
        U, _, _ = np.linalg.svd(H)
        T = U[:, :r].T
    if T.shape[0] == n_R and np.array_equal(T, np.eye(n_R)):
        H_red = H
    else:
        H_red = T @ H
        # deterministic signs: first significant entry of each row positive
        for i in range(H_red.shape[0]):
            row = H_red[i]
            k = int(np.argmax(np.abs(row) > model.tol_rank * np.abs(row).max()))
            if row[k] < 0:
                T[i] = -T[i]
                H_red[i] = -row
        H_red[np.abs(H_red) < 1e-15 * np.abs(H_red).max()] = 0.0
    status = "square_full_rank" if r == n_T else "canonical"
    reduced = ChannelModel(H_red, model.A, model.alpha, status, model.tol_rank)
    return ReductionReport(
        original_rank=r,
        transform=T,
        reduced=reduced,
        whitened=noise_cov is not None,
        square_full_rank=(r == n_T),
        noise_transform=S_inv_T,
    )


def effective_alpha(model: ChannelModel) -> float:
    # above n_T/2 the average constraint is inactive
    return min(float(model.alpha), model.n_T / 2.0)


def require_canonical(model: ChannelModel):
    if model.status == "square_full_rank":
        raise SquareFullRank("square full-rank channels are not covered by these bounds")
    if model.status != "canonical":
        raise ChannelError("channel must be reduced to canonical form first")


def load_channel(path, tol_rank=TOL_RANK) -> ChannelModel:
    """Read a channel JSON document and return a canonical model.

    Non-canonical inputs (tall, rank-deficient, or with correlated noise)
    go through reduce_channel.
    """
    with open(path) as fh:
        doc = json.load(fh)
    return channel_from_dict(doc, tol_rank)


def channel_from_dict(doc, tol_rank=TOL_RANK) -> ChannelModel:
    model = validate_channel(doc["H"], doc.get("A", 1.0), doc.get("alpha", 1.0), tol_rank)
    noise_cov = doc.get("noise_cov")
    if noise_cov is not None or model.status == "needs_reduction":
        model = reduce_channel(model, noise_cov).reduced
    return model
