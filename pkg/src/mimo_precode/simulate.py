"""Monte-Carlo link simulation: channels, QPSK, receivers, BER and sum-rate sweeps.

Every trial draws from its own generator seeded by ``(seed, trial)``, in
a fixed order (channel, bits, noise).  All precoder kinds and Eb/N0 points
therefore see the same realizations, and results do not depend on how
trials are split across worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import PrecodingError
from .lattice import DEFAULT_DELTA, round_gaussian
from .precoders import (
    ChannelSet,
    PowerLoading,
    PrecoderKind,
    PrecodingResult,
    compute_gamma,
    precode,
    regularization_alpha,
)

BITS_PER_SYMBOL = {"QPSK": 2}
# keeps the regularized designs well posed in the noiseless limit
ALPHA_FLOOR = 1e-10
THREADS_ENV = "MIMO_PRECODE_THREADS"
_QPSK_OFFSET = 1 + 1j


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SystemConfig:
    n_tx: int = 8
    user_rx: tuple[int, ...] = (2, 2, 2, 2)
    ebn0_grid_db: tuple[float, ...] = tuple(float(x) for x in range(0, 31, 2))
    trials: int = 10_000
    packet_len: int = 100
    seed: int = 0
    precoder: PrecoderKind = PrecoderKind.LR_SGMI_MMSE
    power_loading: PowerLoading = PowerLoading.UNIFORM
    clll_delta: float = DEFAULT_DELTA
    es: Optional[float] = None
    modulation: str = "QPSK"

    def __post_init__(self):
        object.__setattr__(self, "user_rx", tuple(int(n) for n in self.user_rx))
        object.__setattr__(self, "ebn0_grid_db", tuple(float(x) for x in self.ebn0_grid_db))
        object.__setattr__(self, "precoder", PrecoderKind(self.precoder))
        object.__setattr__(self, "power_loading", PowerLoading(self.power_loading))
        if self.n_tx < 1:
            raise ConfigError("n_tx", f"must be >= 1, got {self.n_tx}")
        if not self.user_rx or min(self.user_rx) < 1:
            raise ConfigError("user_rx", f"need at least one user with >= 1 antenna, got {self.user_rx}")
        if self.n_rx > self.n_tx:
            raise ConfigError(
                "user_rx",
                f"dimensionality constraint violated: {self.n_rx} receive antennas in total "
                f"exceed N_T = {self.n_tx}, so N_T > rank(H_bar_i) cannot hold",
            )
        if not self.ebn0_grid_db:
            raise ConfigError("ebn0_grid_db", "Eb/N0 grid is empty")
        if any(math.isnan(x) or x == -math.inf for x in self.ebn0_grid_db):
            raise ConfigError("ebn0_grid_db", "Eb/N0 values must be numbers (or +inf)")
        if self.trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {self.trials}")
        if self.packet_len < 1:
            raise ConfigError("packet_len", f"must be >= 1, got {self.packet_len}")
        if not 0.5 < self.clll_delta <= 1.0:
            raise ConfigError("clll_delta", f"must lie in (0.5, 1], got {self.clll_delta}")
        if self.es is not None and not self.es > 0:
            raise ConfigError("es", f"must be positive, got {self.es}")
        if self.modulation not in BITS_PER_SYMBOL:
            raise ConfigError("modulation", f"unsupported modulation {self.modulation!r}")
        if self.power_loading is PowerLoading.WATERFILL and not self.precoder.svd_based:
            raise ConfigError("power_loading", f"water-filling is not defined for {self.precoder.value}")

    @property
    def n_rx(self) -> int:
        return sum(self.user_rx)

    @property
    def symbol_energy(self) -> float:
        """Total transmit power E_s; one unit per receive stream by default."""
        return float(self.n_rx) if self.es is None else float(self.es)

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    def alpha(self, ebn0_db: float) -> float:
        sigma2 = noise_sigma2(ebn0_db, self)
        return max(regularization_alpha(self.n_rx, sigma2, self.symbol_energy), ALPHA_FLOOR)


@dataclass(frozen=True)
class SweepRecord:
    ebn0_db: float
    ber: float = math.nan
    bit_errors: int = 0
    bits_total: int = 0
    ci_halfwidth: float = math.nan
    sum_rate_bits_per_hz: float = math.nan
    mean_flops: float = math.nan
    failed_trials: int = 0
    first_failure: Optional[int] = field(default=None, compare=False)


def noise_sigma2(ebn0_db: float, config: SystemConfig) -> float:
    """Noise variance N_0 = N_R E_s / (N_T M 10^(Eb/N0 / 10))."""
    if ebn0_db == math.inf:
        return 0.0
    return config.n_rx * config.symbol_energy / (
        config.n_tx * config.bits_per_symbol * 10.0 ** (ebn0_db / 10.0)
    )


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def gen_channel(rng: np.random.Generator, config: SystemConfig) -> ChannelSet:
    """I.i.d. CN(0, 1) entries, one block-fading realization."""
    shape = (config.n_rx, config.n_tx)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return ChannelSet.from_combined(h, config.user_rx)


def qpsk_mod(bits) -> np.ndarray:
    """Gray-mapped QPSK over the last axis: bit pair (b0, b1) -> ((1-2 b0) + j(1-2 b1)) / sqrt(2)."""
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("QPSK needs an even number of bits")
    b = bits.astype(float)
    return ((1.0 - 2.0 * b[..., 0::2]) + 1j * (1.0 - 2.0 * b[..., 1::2])) / math.sqrt(2.0)


def qpsk_demod(symbols) -> np.ndarray:
    """Nearest-quadrant decisions, inverse of :func:`qpsk_mod`."""
    symbols = np.asarray(symbols)
    bits = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],), dtype=np.int8)
    bits[..., 0::2] = symbols.real < 0
    bits[..., 1::2] = symbols.imag < 0
    return bits


def lattice_decode(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Quantize in the reduced lattice and map back with ``T``.

    QPSK points are (2z + (1+j)) / sqrt(2) with z Gaussian integer; the
    precoded channel delivers T^{-1} times those points, so the offset
    passes through T^{-1} before rounding.
    """
    t_inv = round_gaussian(np.linalg.inv(t))
    offset = (t_inv @ np.full(t.shape[0], _QPSK_OFFSET))[:, np.newaxis]
    z = t @ round_gaussian((math.sqrt(2.0) * r - offset) / 2.0)
    return (2.0 * z + _QPSK_OFFSET) / math.sqrt(2.0)


def receive(ch: ChannelSet, pr: PrecodingResult, d: np.ndarray, noise: np.ndarray, es: float) -> np.ndarray:
    """Transmit the columns of ``d`` and return per-user symbol estimates."""
    p = pr.combined_precoder
    gamma = compute_gamma(p, d, es)
    scale = np.sqrt(gamma)
    x = (p @ d) / scale
    r = (ch.combined @ x + noise) * scale
    out = np.empty_like(r)
    for i in range(ch.n_users):
        rows = ch.rows(i)
        r_i = r[rows]
        if pr.decode_matrices[i] is not None:
            z = pr.decode_matrices[i] @ r_i
            g = pr.stream_gains[i]
            z[g > 0] /= g[g > 0, np.newaxis]
        elif pr.transforms[i] is not None:
            z = lattice_decode(r_i, pr.transforms[i])
        else:
            z = r_i
        out[rows] = z
    return out


def run_packet(ch, pr, config: SystemConfig, ebn0_db: float, rng, *, sigma2: Optional[float] = None) -> int:
    """Send one packet through ``ch`` precoded by ``pr``; return the bit error count."""
    sigma2 = noise_sigma2(ebn0_db, config) if sigma2 is None else sigma2
    bits = rng.integers(0, 2, size=(config.packet_len, config.bits_per_symbol * config.n_rx), dtype=np.int8)
    d = qpsk_mod(bits).T
    shape = d.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(sigma2 / 2.0)
    d_hat = receive(ch, pr, d, noise, config.symbol_energy)
    return int(np.count_nonzero(qpsk_demod(d_hat.T) != bits))


def design(ch: ChannelSet, config: SystemConfig, ebn0_db: float) -> PrecodingResult:
    return precode(
        config.precoder,
        ch,
        config.alpha(ebn0_db),
        loading=config.power_loading,
        noise=noise_sigma2(ebn0_db, config),
        es=config.symbol_energy,
        delta=config.clll_delta,
    )


def sum_rate(h, p, sigma2: float) -> float:
    """log2 det(I + H P P^H H^H / sigma2) via a Cholesky factor."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    hp = np.asarray(h) @ np.asarray(p)
    m = np.eye(hp.shape[0]) + (hp @ hp.conj().T) / sigma2
    L = np.linalg.cholesky(m)
    return float(2.0 * np.sum(np.log2(np.diag(L).real)))


# --- sweeps -------------------------------------------------------------------


def _ber_chunk(config: SystemConfig, start: int, stop: int):
    n_pts = len(config.ebn0_grid_db)
    errors = np.zeros((n_pts, stop - start), dtype=np.int64)
    flops = np.zeros((n_pts, stop - start), dtype=np.int64)
    failed = np.zeros((n_pts, stop - start), dtype=bool)
    for col, trial in enumerate(range(start, stop)):
        for row, ebn0 in enumerate(config.ebn0_grid_db):
            rng = trial_rng(config.seed, trial)
            ch = gen_channel(rng, config)
            try:
                pr = design(ch, config, ebn0)
            except PrecodingError:
                failed[row, col] = True
                continue
            flops[row, col] = pr.flops
            errors[row, col] = run_packet(ch, pr, config, ebn0, rng)
    return errors, flops, failed


def _sumrate_chunk(config: SystemConfig, start: int, stop: int):
    n_pts = len(config.ebn0_grid_db)
    rates = np.zeros((n_pts, stop - start))
    flops = np.zeros((n_pts, stop - start), dtype=np.int64)
    failed = np.zeros((n_pts, stop - start), dtype=bool)
    for col, trial in enumerate(range(start, stop)):
        for row, ebn0 in enumerate(config.ebn0_grid_db):
            rng = trial_rng(config.seed, trial)
            ch = gen_channel(rng, config)
            try:
                pr = design(ch, config, ebn0)
            except PrecodingError:
                failed[row, col] = True
                continue
            flops[row, col] = pr.flops
            p = pr.combined_precoder / math.sqrt(pr.gamma)
            rates[row, col] = sum_rate(ch.combined, p, noise_sigma2(ebn0, config))
    return rates, flops, failed


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def _run_chunks(fn, config: SystemConfig, workers: Optional[int]):
    workers = min(worker_count(workers), config.trials)
    edges = np.linspace(0, config.trials, workers + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if len(spans) == 1:
        parts = [fn(config, *spans[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(spans)) as pool:
            parts = list(pool.map(fn, [config] * len(spans), *zip(*spans)))
    return [np.concatenate(arrs, axis=1) for arrs in zip(*parts)]


def _failure_info(failed_row: np.ndarray) -> tuple[int, Optional[int]]:
    idx = np.flatnonzero(failed_row)
    return int(idx.size), (int(idx[0]) if idx.size else None)


def run_ber_sweep(config: SystemConfig, *, workers: Optional[int] = None) -> list[SweepRecord]:
    """BER per Eb/N0 point over ``config.trials`` independent channels."""
    errors, flops, failed = _run_chunks(_ber_chunk, config, workers)
    bits_per_trial = config.packet_len * config.n_rx * config.bits_per_symbol
    records = []
    for row, ebn0 in enumerate(config.ebn0_grid_db):
        n_failed, first = _failure_info(failed[row])
        ok = config.trials - n_failed
        bit_errors = int(errors[row].sum())
        bits_total = ok * bits_per_trial
        ber = bit_errors / bits_total if bits_total else math.nan
        half = 3.0 * math.sqrt(ber * (1.0 - ber) / bits_total) if bits_total else math.nan
        records.append(
            SweepRecord(
                ebn0_db=ebn0,
                ber=ber,
                bit_errors=bit_errors,
                bits_total=bits_total,
                ci_halfwidth=half,
                mean_flops=float(flops[row][~failed[row]].sum() / ok) if ok else math.nan,
                failed_trials=n_failed,
                first_failure=first,
            )
        )
    return records


def run_sumrate_sweep(config: SystemConfig, *, workers: Optional[int] = None) -> list[SweepRecord]:
    """Mean sum-rate (bits/Hz) per Eb/N0 point, precoder scaled to total power E_s."""
    if any(math.isinf(x) for x in config.ebn0_grid_db):
        raise ConfigError("ebn0_grid_db", "sum-rate needs finite Eb/N0 values")
    rates, flops, failed = _run_chunks(_sumrate_chunk, config, workers)
    records = []
    for row, ebn0 in enumerate(config.ebn0_grid_db):
        n_failed, first = _failure_info(failed[row])
        ok = config.trials - n_failed
        keep = ~failed[row]
        records.append(
            SweepRecord(
                ebn0_db=ebn0,
                sum_rate_bits_per_hz=float(rates[row][keep].sum() / ok) if ok else math.nan,
                mean_flops=float(flops[row][keep].sum() / ok) if ok else math.nan,
                failed_trials=n_failed,
                first_failure=first,
            )
        )
    return records


def flop_survey(
    config: SystemConfig, kinds: Sequence[PrecoderKind], ebn0_db: float, channels: int
) -> dict[PrecoderKind, float]:
    """Mean design cost of each kind over the same ``channels`` realizations."""
    totals = {PrecoderKind(k): 0 for k in kinds}
    for trial in range(channels):
        ch = gen_channel(trial_rng(config.seed, trial), config)
        for kind in totals:
            cfg = _with_kind(config, kind)
            totals[kind] += design(ch, cfg, ebn0_db).flops
    return {k: v / channels for k, v in totals.items()}


def _with_kind(config: SystemConfig, kind: PrecoderKind) -> SystemConfig:
    loading = config.power_loading if PrecoderKind(kind).svd_based else PowerLoading.UNIFORM
    return replace(config, precoder=kind, power_loading=loading)


def reduction_percent(cost: float, baseline: float) -> float:
    return 100.0 * (1.0 - cost / baseline)
