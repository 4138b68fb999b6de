"""MU-MIMO downlink precoders.

Two-stage designs ``P = P^a P^b``: the first stage suppresses multi-user
interference (exact null space for BD, regularized for RBD and its QR
variant, an MMSE channel inversion followed by per-user QR for S-GMI),
the second stage separates each user's streams (SVD for the BD family,
per-user channel inversion for S-GMI, lattice-reduction-aided inversion
for the LR-S-GMI variants).

All matrix work runs through :mod:`mimo_precode.cxmat`, so the ``flops``
field of a :class:`PrecodingResult` is the operation count of the design.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import cxmat as cx
from .errors import AllZeroChannels, DimensionalityViolation, DivisionByZero, RankDeficient
from .lattice import DEFAULT_DELTA, clll_reduce

RANK_TOL = 1e-10


class PrecoderKind(str, Enum):
    BD = "bd"
    RBD = "rbd"
    QRSVD_RBD = "qrsvd-rbd"
    SGMI = "sgmi"
    LR_SGMI_ZF = "lr-sgmi-zf"
    LR_SGMI_MMSE = "lr-sgmi-mmse"

    @property
    def svd_based(self) -> bool:
        return self in (PrecoderKind.BD, PrecoderKind.RBD, PrecoderKind.QRSVD_RBD)

    @property
    def lattice_reduced(self) -> bool:
        return self in (PrecoderKind.LR_SGMI_ZF, PrecoderKind.LR_SGMI_MMSE)


class PowerLoading(str, Enum):
    UNIFORM = "uniform"
    WATERFILL = "wf"


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channel blocks ``H_i`` and their row stack ``H``."""

    per_user: tuple[np.ndarray, ...]
    combined: np.ndarray

    def __post_init__(self):
        if not self.per_user:
            raise ValueError("at least one user is required")
        n_tx = self.combined.shape[1]
        if any(h.shape[1] != n_tx for h in self.per_user):
            raise ValueError("all user blocks need N_T columns")
        if not np.array_equal(np.vstack(self.per_user), self.combined):
            raise ValueError("combined channel must be the row stack of the user blocks")
        for i in range(self.n_users):
            others = self.others(i)
            if others.shape[0] < n_tx:
                continue  # rank <= rows < N_T
            s = np.linalg.svd(others, compute_uv=False)
            if cx.numerical_rank(s, RANK_TOL) >= n_tx:
                raise DimensionalityViolation(
                    f"dimensionality constraint N_T > rank(H_bar_{i}) violated: "
                    f"N_T = {n_tx}, rank = {cx.numerical_rank(s, RANK_TOL)}"
                )

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray]) -> "ChannelSet":
        per_user = tuple(cx.as_cmatrix(b, name=f"H_{i}") for i, b in enumerate(blocks))
        return cls(per_user=per_user, combined=np.vstack(per_user))

    @classmethod
    def from_combined(cls, h, user_rx: Sequence[int]) -> "ChannelSet":
        h = cx.as_cmatrix(h, name="H")
        if sum(user_rx) != h.shape[0]:
            raise ValueError(f"user_rx {list(user_rx)} does not sum to {h.shape[0]} rows")
        edges = np.cumsum([0, *user_rx])
        return cls.from_blocks([h[a:b] for a, b in zip(edges[:-1], edges[1:])])

    @property
    def n_tx(self) -> int:
        return self.combined.shape[1]

    @property
    def n_rx(self) -> int:
        return self.combined.shape[0]

    @property
    def n_users(self) -> int:
        return len(self.per_user)

    @property
    def user_rx(self) -> tuple[int, ...]:
        return tuple(h.shape[0] for h in self.per_user)

    def rows(self, i: int) -> slice:
        start = sum(self.user_rx[:i])
        return slice(start, start + self.user_rx[i])

    def others(self, i: int) -> np.ndarray:
        """Interference channel of user ``i``: every row except user i's."""
        blocks = [h for j, h in enumerate(self.per_user) if j != i]
        if not blocks:
            return np.zeros((0, self.n_tx), dtype=np.complex128)
        return np.vstack(blocks)


@dataclass(frozen=True)
class PrecodingResult:
    """Output of a precoder design for one channel realization.

    ``gamma`` is the average power normalization ``||P||_F^2 / E_s`` (the
    expectation of the per-vector scaling for unit-energy symbols); the
    simulator recomputes the per-vector value with :func:`compute_gamma`.
    ``stream_gains`` holds, for the SVD family, the real diagonal a user
    sees after applying its decode matrix.
    """

    kind: PrecoderKind
    combined_precoder: np.ndarray
    first_filters: tuple[np.ndarray, ...]
    second_filters: tuple[np.ndarray, ...]
    transforms: tuple[Optional[np.ndarray], ...]
    decode_matrices: tuple[Optional[np.ndarray], ...]
    stream_gains: tuple[Optional[np.ndarray], ...]
    gamma: float
    flops: int
    alpha: float = 0.0


def regularization_alpha(n_rx: int, noise_var: float, es: float) -> float:
    """MMSE regularization N_R sigma_n^2 / E_s."""
    if es <= 0:
        raise ValueError(f"E_s must be positive, got {es}")
    return n_rx * noise_var / es


def compute_gamma(p, d, es: float):
    """Power scaling ||P d||^2 / E_s; one value per column when ``d`` is a matrix."""
    if es <= 0:
        raise ValueError(f"E_s must be positive, got {es}")
    s = np.asarray(p) @ np.asarray(d)
    return np.sum(np.abs(s) ** 2, axis=0) / es


def waterfill(singular_values, total_power: float, noise: float) -> np.ndarray:
    """Water-filling powers max(0, mu - noise / s_k^2) summing to ``total_power``."""
    s = np.asarray(singular_values, dtype=float)
    if total_power <= 0 or noise < 0:
        raise ValueError("total_power must be positive and noise non-negative")
    floors = np.full(s.shape, np.inf)
    positive = s > 0
    with np.errstate(over="ignore"):
        floors[positive] = (np.sqrt(noise) / s[positive]) ** 2
    if not np.any(positive):
        raise AllZeroChannels("no positive singular value to load")
    # an overflowing floor only matters when it is the single best channel
    active = np.isfinite(floors)
    if not np.any(active):
        powers = np.zeros_like(s)
        powers[np.argmax(s)] = total_power
        return powers
    order = np.argsort(floors)
    # offsets from the lowest floor keep mu - floor free of cancellation
    rel = floors[order] - floors[order[0]]
    # largest active set whose water level clears every member's floor
    n_active = int(active.sum())
    while n_active > 1 and total_power <= np.sum(rel[n_active - 1] - rel[:n_active]):
        n_active -= 1
    shares = total_power / n_active + (rel[:n_active].mean() - rel[:n_active])
    powers = np.zeros_like(s)
    powers[order[:n_active]] = shares
    return powers


def _check_alpha(alpha: float, strictly_positive: bool = False) -> None:
    if alpha < 0 or (strictly_positive and alpha == 0):
        bound = "> 0" if strictly_positive else ">= 0"
        raise ValueError(f"alpha must be {bound}, got {alpha}")


def _pad_columns(a: np.ndarray, n: int) -> np.ndarray:
    if a.shape[1] >= n:
        return a[:, :n]
    return np.hstack([a, np.zeros((a.shape[0], n - a.shape[1]), dtype=a.dtype)])


def _svd_second_stage(ch, first, loading, noise, es):
    """SVD of each effective channel, optional joint water-filling, assembly."""
    second, decode, gains = [], [], []
    for i, pa in enumerate(first):
        h_eff = cx.matmul(ch.per_user[i], pa)
        n_i = ch.user_rx[i]
        # only the leading N_i right vectors are used; U must stay square
        u, s, v = cx.svd(h_eff, full=h_eff.shape[0] > h_eff.shape[1])
        second.append(_pad_columns(v, n_i))
        decode.append(u.conj().T)
        gains.append(np.pad(s, (0, max(0, n_i - s.size)))[:n_i])
    if loading is PowerLoading.WATERFILL:
        if noise is None:
            raise ValueError("water-filling needs the noise variance")
        powers = waterfill(np.concatenate(gains), es, noise)
        edges = np.cumsum([0, *ch.user_rx])
        loads = [np.sqrt(powers[a:b]) for a, b in zip(edges[:-1], edges[1:])]
        second = [cx.scale_columns(pb, ld) for pb, ld in zip(second, loads)]
        gains = [g * ld for g, ld in zip(gains, loads)]
    blocks = [cx.matmul(pa, pb) for pa, pb in zip(first, second)]
    return np.hstack(blocks), tuple(second), tuple(decode), tuple(gains)


def _result(kind, ch, p, first, second, es, flops, alpha, transforms=None, decode=None, gains=None):
    k = ch.n_users
    es = ch.n_rx if es is None else es
    return PrecodingResult(
        kind=kind,
        combined_precoder=p,
        first_filters=tuple(first),
        second_filters=tuple(second),
        transforms=tuple(transforms) if transforms else (None,) * k,
        decode_matrices=tuple(decode) if decode else (None,) * k,
        stream_gains=tuple(gains) if gains else (None,) * k,
        gamma=float(np.sum(np.abs(p) ** 2) / es),
        flops=flops,
        alpha=alpha,
    )


def bd_precode(ch: ChannelSet, *, loading=PowerLoading.UNIFORM, noise=None, es=None) -> PrecodingResult:
    """Block diagonalization: exact null-space first stage, SVD second stage."""
    es = ch.n_rx if es is None else es
    with cx.count_flops() as ctr:
        first = []
        for i in range(ch.n_users):
            others = ch.others(i)
            if others.shape[0] == 0:
                first.append(np.eye(ch.n_tx, dtype=np.complex128))
                continue
            _, s, v = cx.svd(others, want_u=False)
            rank = cx.numerical_rank(s, RANK_TOL)
            if rank >= ch.n_tx:
                raise DimensionalityViolation(f"user {i}: interference rank {rank} >= N_T")
            first.append(v[:, rank:])
        p, second, decode, gains = _svd_second_stage(ch, first, loading, noise, es)
    return _result(PrecoderKind.BD, ch, p, first, second, es, ctr.flops, 0.0, decode=decode, gains=gains)


def rbd_precode(ch: ChannelSet, alpha: float, *, loading=PowerLoading.UNIFORM, noise=None, es=None) -> PrecodingResult:
    """Regularized BD: first filter V_bar (S_bar^T S_bar + alpha I)^{-1/2}."""
    _check_alpha(alpha)
    es = ch.n_rx if es is None else es
    with cx.count_flops() as ctr:
        first = []
        for i in range(ch.n_users):
            others = ch.others(i)
            if others.shape[0] == 0:
                s = np.zeros(0)
                v = np.eye(ch.n_tx, dtype=np.complex128)
            else:
                _, s, v = cx.svd(others, want_u=False)
                rank = cx.numerical_rank(s, RANK_TOL)
                if rank >= ch.n_tx:
                    raise DimensionalityViolation(f"user {i}: interference rank {rank} >= N_T")
            first.append(cx.scale_columns(v, cx.inv_sqrt_diag_reg(s, alpha, ch.n_tx)))
        p, second, decode, gains = _svd_second_stage(ch, first, loading, noise, es)
    return _result(PrecoderKind.RBD, ch, p, first, second, es, ctr.flops, alpha, decode=decode, gains=gains)


def qrsvd_rbd_precode(ch: ChannelSet, alpha: float, *, loading=PowerLoading.UNIFORM, noise=None, es=None) -> PrecodingResult:
    """RBD with the first SVD replaced by a QR decomposition.

    The QR factor R of the stacked matrix [H_bar_i; sqrt(alpha) I] satisfies
    R^H R = H_bar_i^H H_bar_i + alpha I, so R^{-1} equals the RBD first
    filter up to a right unitary factor, which the second SVD absorbs.
    """
    _check_alpha(alpha)
    es = ch.n_rx if es is None else es
    eye = np.eye(ch.n_tx, dtype=np.complex128)
    with cx.count_flops() as ctr:
        first = []
        for i in range(ch.n_users):
            stacked = np.vstack([ch.others(i), np.sqrt(alpha) * eye])
            if stacked.shape[0] < ch.n_tx:
                raise DivisionByZero("alpha = 0 leaves the regularized Gram matrix singular")
            try:
                r = cx.qr_r(stacked)
            except RankDeficient as exc:
                raise DivisionByZero("alpha = 0 with rank deficient interference channel") from exc
            first.append(cx.upper_inverse(r))
        p, second, decode, gains = _svd_second_stage(ch, first, loading, noise, es)
    return _result(PrecoderKind.QRSVD_RBD, ch, p, first, second, es, ctr.flops, alpha, decode=decode, gains=gains)


def sgmi_first_filters(ch: ChannelSet, alpha: float) -> tuple[tuple[np.ndarray, ...], int]:
    """Orthonormal bases Q_i of the user blocks of (H^H H + alpha I)^{-1} H^H."""
    _check_alpha(alpha, strictly_positive=True)
    with cx.count_flops() as ctr:
        h_mse = cx.regularized_inverse(ch.combined, alpha)
        filters = tuple(cx.qr_thin(h_mse[:, ch.rows(i)])[0] for i in range(ch.n_users))
    return filters, ctr.flops


def _mmse_inverse(h: np.ndarray, alpha: float) -> np.ndarray:
    """H^H (H H^H + alpha I)^{-1} via a Hermitian solve."""
    g = cx.outer_gram(h)
    if alpha:
        g = cx.add_identity(g, alpha)
    return cx.herm_solve(g, h).conj().T


def sgmi_precode(ch: ChannelSet, alpha: float, *, es=None) -> PrecodingResult:
    """S-GMI first stage with a per-user MMSE inversion as second stage."""
    es = ch.n_rx if es is None else es
    with cx.count_flops() as ctr:
        first, _ = sgmi_first_filters(ch, alpha)
        second = [_mmse_inverse(cx.matmul(ch.per_user[i], q), alpha) for i, q in enumerate(first)]
        p = np.hstack([cx.matmul(q, pb) for q, pb in zip(first, second)])
    return _result(PrecoderKind.SGMI, ch, p, first, second, es, ctr.flops, alpha)


def lr_sgmi_zf_precode(ch: ChannelSet, alpha: float, *, delta=DEFAULT_DELTA, es=None) -> PrecodingResult:
    """S-GMI first stage, CLLL on each effective channel, ZF second stage."""
    es = ch.n_rx if es is None else es
    with cx.count_flops() as ctr:
        first, _ = sgmi_first_filters(ch, alpha)
        second, transforms = [], []
        for i, q in enumerate(first):
            red = clll_reduce(cx.matmul(ch.per_user[i], q), delta)
            second.append(_mmse_inverse(red.reduced, 0.0))
            transforms.append(red.transform)
        p = np.hstack([cx.matmul(q, pb) for q, pb in zip(first, second)])
    return _result(PrecoderKind.LR_SGMI_ZF, ch, p, first, second, es, ctr.flops, alpha, transforms=transforms)


def lr_sgmi_mmse_precode(ch: ChannelSet, alpha: float, *, delta=DEFAULT_DELTA, es=None) -> PrecodingResult:
    """S-GMI first stage, CLLL on each extended channel [H_eff, sqrt(alpha) I], MMSE second stage."""
    _check_alpha(alpha, strictly_positive=True)
    es = ch.n_rx if es is None else es
    with cx.count_flops() as ctr:
        first, _ = sgmi_first_filters(ch, alpha)
        second, transforms = [], []
        for i, q in enumerate(first):
            h_eff = cx.matmul(ch.per_user[i], q)
            n_i, width = h_eff.shape
            extended = np.hstack([h_eff, np.sqrt(alpha) * np.eye(n_i)])
            red = clll_reduce(extended, delta)
            # keep the rows that act on the effective channel, drop the noise part
            second.append(_mmse_inverse(red.reduced, 0.0)[:width])
            transforms.append(red.transform)
        p = np.hstack([cx.matmul(q, pb) for q, pb in zip(first, second)])
    return _result(PrecoderKind.LR_SGMI_MMSE, ch, p, first, second, es, ctr.flops, alpha, transforms=transforms)


def precode(
    kind: PrecoderKind,
    ch: ChannelSet,
    alpha: float,
    *,
    loading: PowerLoading = PowerLoading.UNIFORM,
    noise: Optional[float] = None,
    es: Optional[float] = None,
    delta: float = DEFAULT_DELTA,
) -> PrecodingResult:
    kind = PrecoderKind(kind)
    loading = PowerLoading(loading)
    if loading is PowerLoading.WATERFILL and not kind.svd_based:
        raise ValueError(f"water-filling applies to the BD/RBD family only, not {kind.value}")
    if kind is PrecoderKind.BD:
        return bd_precode(ch, loading=loading, noise=noise, es=es)
    if kind is PrecoderKind.RBD:
        return rbd_precode(ch, alpha, loading=loading, noise=noise, es=es)
    if kind is PrecoderKind.QRSVD_RBD:
        return qrsvd_rbd_precode(ch, alpha, loading=loading, noise=noise, es=es)
    if kind is PrecoderKind.SGMI:
        return sgmi_precode(ch, alpha, es=es)
    if kind is PrecoderKind.LR_SGMI_ZF:
        return lr_sgmi_zf_precode(ch, alpha, delta=delta, es=es)
    return lr_sgmi_mmse_precode(ch, alpha, delta=delta, es=es)
