import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mimo_precode.precoders import ChannelSet, PowerLoading, PrecoderKind, bd_precode, waterfill
from mimo_precode.simulate import (
    ConfigError,
    SystemConfig,
    design,
    flop_survey,
    gen_channel,
    lattice_decode,
    noise_sigma2,
    qpsk_demod,
    qpsk_mod,
    reduction_percent,
    run_ber_sweep,
    run_packet,
    run_sumrate_sweep,
    sum_rate,
    trial_rng,
)

from conftest import crandn

SMALL = SystemConfig(ebn0_grid_db=(5.0, 15.0), trials=12, packet_len=20, seed=3)


# --- configuration ------------------------------------------------------------------


def test_config_defaults():
    cfg = SystemConfig()
    assert cfg.n_rx == 8 and cfg.symbol_energy == 8.0 and cfg.bits_per_symbol == 2
    assert cfg.ebn0_grid_db[0] == 0 and cfg.ebn0_grid_db[-1] == 30


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"n_tx": 4, "user_rx": (3, 3)}, "user_rx"),
        ({"ebn0_grid_db": ()}, "ebn0_grid_db"),
        ({"trials": 0}, "trials"),
        ({"packet_len": 0}, "packet_len"),
        ({"clll_delta": 0.3}, "clll_delta"),
        ({"es": -1.0}, "es"),
        ({"modulation": "16QAM"}, "modulation"),
        ({"precoder": "sgmi", "power_loading": "wf"}, "power_loading"),
    ],
)
def test_config_errors_name_field(kwargs, field):
    with pytest.raises(ConfigError) as info:
        SystemConfig(**kwargs)
    assert info.value.field == field


def test_dimensionality_message():
    with pytest.raises(ConfigError, match="dimensionality constraint"):
        SystemConfig(n_tx=4, user_rx=(3, 3))


# --- noise mapping ----------------------------------------------------------------


def test_noise_sigma2_reference_value():
    assert noise_sigma2(0.0, SystemConfig(es=8.0)) == pytest.approx(4.0)


def test_noise_sigma2_limits():
    cfg = SystemConfig()
    assert noise_sigma2(math.inf, cfg) == 0.0
    assert noise_sigma2(0.0, cfg) == pytest.approx(10 * noise_sigma2(10.0, cfg))
    # unit energy per stream: sigma^2 = E_s / (2 * 10^(x/10)) on the reference layout
    assert noise_sigma2(3.0, cfg) == pytest.approx(8.0 / (2 * 10**0.3))


def test_alpha_floor_in_noiseless_limit():
    assert SystemConfig().alpha(math.inf) > 0


# --- channel and modulation ----------------------------------------------------------


def test_channel_statistics():
    rng = np.random.default_rng(0)
    cfg = SystemConfig()
    h = np.concatenate([gen_channel(rng, cfg).combined.ravel() for _ in range(16_000)])
    assert h.size > 10**6
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(h.real.mean()) < 0.005 and abs(h.imag.mean()) < 0.005
    assert np.var(h.real) == pytest.approx(0.5, abs=0.01)


def test_channel_determinism():
    cfg = SystemConfig()
    a = gen_channel(trial_rng(5, 17), cfg).combined
    b = gen_channel(trial_rng(5, 17), cfg).combined
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gen_channel(trial_rng(5, 18), cfg).combined)


def test_qpsk_mapping_table():
    s = qpsk_mod(np.array([0, 0, 0, 1, 1, 0, 1, 1]))
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(s, [r + r * 1j, r - r * 1j, -r + r * 1j, -r - r * 1j])
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0)
    np.testing.assert_array_equal(qpsk_demod(s), [0, 0, 0, 1, 1, 0, 1, 1])
    with pytest.raises(ValueError):
        qpsk_mod([0, 1, 1])


@given(st.lists(st.integers(0, 1), min_size=2, max_size=64).filter(lambda b: len(b) % 2 == 0))
def test_qpsk_roundtrip(bits):
    bits = np.array(bits)
    np.testing.assert_array_equal(qpsk_demod(qpsk_mod(bits)), bits)


def test_lattice_decode_is_exact_on_transformed_points():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = np.array([[1, 0], [0, 1]], dtype=complex)
        for _ in range(3):
            k = rng.integers(-2, 3) + 1j * rng.integers(-2, 3)
            t = np.array([[1, k], [0, 1]]) @ np.array([[0, 1], [1, 0]]) @ t
        bits = rng.integers(0, 2, (2 * 2, 5))
        d = qpsk_mod(bits.T).T
        r = np.linalg.inv(t) @ d  # what the LR precoder delivers before noise
        np.testing.assert_allclose(lattice_decode(r, t), d, atol=1e-12)


# --- packets -----------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(PrecoderKind))
def test_noiseless_packet_is_error_free(kind):
    cfg = replace(SMALL, precoder=kind)
    for trial in range(20):
        rng = trial_rng(1, trial)
        ch = gen_channel(rng, cfg)
        pr = design(ch, cfg, math.inf)
        assert run_packet(ch, pr, cfg, math.inf, rng) == 0


@pytest.mark.parametrize("kind", [PrecoderKind.BD, PrecoderKind.RBD])
def test_noiseless_waterfilled_packet(kind):
    cfg = replace(SMALL, precoder=kind, power_loading=PowerLoading.WATERFILL)
    rng = trial_rng(2, 0)
    ch = gen_channel(rng, cfg)
    assert run_packet(ch, design(ch, cfg, math.inf), cfg, math.inf, rng) == 0


def test_single_user_bd_is_svd_transmission():
    cfg = SystemConfig(n_tx=2, user_rx=(2,), packet_len=50, precoder=PrecoderKind.BD,
                       power_loading=PowerLoading.WATERFILL)
    ebn0 = 6.0
    sigma2 = noise_sigma2(ebn0, cfg)
    errs_bd = errs_ref = 0
    for trial in range(300):
        rng = trial_rng(9, trial)
        ch = gen_channel(rng, cfg)
        pr = design(ch, cfg, ebn0)
        u, s, vh = np.linalg.svd(ch.combined)
        lam = waterfill(s, cfg.symbol_energy, sigma2)
        p = vh.conj().T * np.sqrt(lam)
        # same transmission up to a per-stream phase
        np.testing.assert_allclose(pr.combined_precoder @ pr.combined_precoder.conj().T, p @ p.conj().T, atol=1e-12)
        np.testing.assert_allclose(pr.stream_gains[0], s * np.sqrt(lam), atol=1e-12)
        errs_bd += run_packet(ch, pr, cfg, ebn0, rng)
        bits = rng.integers(0, 2, size=(cfg.packet_len, 4), dtype=np.int8)
        d = qpsk_mod(bits).T
        noise = (rng.standard_normal(d.shape) + 1j * rng.standard_normal(d.shape)) * math.sqrt(sigma2 / 2)
        g = np.sum(np.abs(p @ d) ** 2, axis=0) / cfg.symbol_energy
        r = (ch.combined @ (p @ d) / np.sqrt(g) + noise) * np.sqrt(g)
        z = u.conj().T @ r
        gains = s * np.sqrt(lam)
        z[gains > 0] /= gains[gains > 0, None]
        errs_ref += int(np.count_nonzero(qpsk_demod(z.T) != bits))
    n = 300 * cfg.packet_len * 4
    p_bd, p_ref = errs_bd / n, errs_ref / n
    tol = 3 * math.sqrt(p_bd * (1 - p_bd) / n) + 3 * math.sqrt(p_ref * (1 - p_ref) / n)
    assert errs_bd > 0 and abs(p_bd - p_ref) <= tol


# --- sum-rate ----------------------------------------------------------------------


def test_sum_rate_examples():
    assert sum_rate(np.eye(2), np.eye(2), 1.0) == pytest.approx(2.0)
    assert sum_rate(np.eye(2), np.zeros((2, 2)), 1.0) == 0.0
    assert sum_rate(np.ones((1, 1)), np.ones((1, 1)), 1 / 3) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sum_rate(np.eye(2), np.eye(2), 0.0)


def test_sum_rate_matches_slogdet(rng):
    h, p = crandn(rng, 8, 8), crandn(rng, 8, 8)
    m = np.eye(8) + h @ p @ p.conj().T @ h.conj().T / 0.3
    assert sum_rate(h, p, 0.3) == pytest.approx(np.linalg.slogdet(m)[1] / np.log(2), rel=1e-12)


def test_sum_rate_vanishes_at_low_snr():
    cfg = replace(SMALL, ebn0_grid_db=(-60.0,), trials=5)
    for kind in PrecoderKind:
        rec = run_sumrate_sweep(replace(cfg, precoder=kind), workers=1)[0]
        assert rec.sum_rate_bits_per_hz < 1e-4


def test_waterfill_sum_rate_dominates_uniform():
    cfg = replace(SMALL, ebn0_grid_db=(0.0, 10.0, 20.0), trials=30, precoder=PrecoderKind.BD)
    uni = run_sumrate_sweep(cfg, workers=1)
    wf = run_sumrate_sweep(replace(cfg, power_loading=PowerLoading.WATERFILL), workers=1)
    for a, b in zip(uni, wf):
        assert b.sum_rate_bits_per_hz >= a.sum_rate_bits_per_hz - 1e-12


def test_sumrate_rejects_noiseless():
    with pytest.raises(ConfigError):
        run_sumrate_sweep(replace(SMALL, ebn0_grid_db=(math.inf,)), workers=1)


# --- sweeps ------------------------------------------------------------------------


def test_ber_record_bookkeeping():
    cfg = replace(SMALL, precoder=PrecoderKind.RBD)
    for rec in run_ber_sweep(cfg, workers=1):
        assert rec.bits_total == cfg.trials * cfg.packet_len * cfg.n_rx * cfg.bits_per_symbol
        assert rec.ber == rec.bit_errors / rec.bits_total
        p = rec.ber
        assert rec.ci_halfwidth == pytest.approx(3 * math.sqrt(p * (1 - p) / rec.bits_total))
        assert rec.failed_trials == 0 and rec.mean_flops > 0


def test_single_trial_noiseless():
    cfg = replace(SMALL, ebn0_grid_db=(math.inf,), trials=1)
    assert run_ber_sweep(cfg, workers=1)[0].ber == 0.0


def test_sweep_determinism_across_workers():
    cfg = replace(SMALL, trials=9)
    one = run_ber_sweep(cfg, workers=1)
    two = run_ber_sweep(cfg, workers=2)
    assert one == two
    assert run_sumrate_sweep(cfg, workers=1) == run_sumrate_sweep(cfg, workers=2)


def test_env_var_worker_count(monkeypatch):
    from mimo_precode.simulate import worker_count

    monkeypatch.setenv("MIMO_PRECODE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("MIMO_PRECODE_THREADS", "0")
    assert worker_count() >= 1
    assert worker_count(2) == 2


def test_split_seed_pooling_is_consistent():
    cfg = replace(SMALL, ebn0_grid_db=(10.0,), trials=40, precoder=PrecoderKind.SGMI)
    full = run_ber_sweep(cfg, workers=1)[0]
    a = run_ber_sweep(replace(cfg, trials=20, seed=101), workers=1)[0]
    b = run_ber_sweep(replace(cfg, trials=20, seed=202), workers=1)[0]
    pooled = (a.bit_errors + b.bit_errors) / (a.bits_total + b.bits_total)
    halfwidth = full.ci_halfwidth + 3 * math.sqrt(pooled * (1 - pooled) / (a.bits_total + b.bits_total))
    assert abs(pooled - full.ber) <= halfwidth


def test_flop_survey_and_reduction():
    cfg = SystemConfig()
    means = flop_survey(cfg, list(PrecoderKind), 15.0, 5)
    assert set(means) == set(PrecoderKind)
    assert means == flop_survey(cfg, list(PrecoderKind), 15.0, 5)
    assert reduction_percent(25.0, 100.0) == 75.0


def test_flop_survey_single_user():
    cfg = SystemConfig(n_tx=4, user_rx=(2,))
    means = flop_survey(cfg, list(PrecoderKind), 10.0, 3)
    assert all(v > 0 for v in means.values())


def test_bd_ber_helper_matches_direct_design():
    cfg = replace(SMALL, precoder=PrecoderKind.BD)
    ch = gen_channel(trial_rng(0, 0), cfg)
    np.testing.assert_allclose(design(ch, cfg, 5.0).combined_precoder, bd_precode(ch).combined_precoder)


def test_failed_trials_are_reported(monkeypatch):
    import mimo_precode.simulate as sim
    from mimo_precode.errors import NoConvergence

    real_design = sim.design

    def flaky(ch, config, ebn0_db):
        if np.abs(ch.combined[0, 0]) > 1.2:
            raise NoConvergence("forced")
        return real_design(ch, config, ebn0_db)

    monkeypatch.setattr(sim, "design", flaky)
    monkeypatch.setenv("MIMO_PRECODE_THREADS", "1")
    rec = run_ber_sweep(replace(SMALL, trials=20), workers=1)[0]
    assert rec.failed_trials > 0 and rec.first_failure is not None
    assert rec.bits_total == (20 - rec.failed_trials) * SMALL.packet_len * 16


def test_channel_set_from_config_layout():
    ch = gen_channel(trial_rng(0, 0), SystemConfig(n_tx=6, user_rx=(1, 2, 3)))
    assert isinstance(ch, ChannelSet) and ch.user_rx == (1, 2, 3)
