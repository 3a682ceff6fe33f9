import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import j0

from oracles import gmeds_gains
from prach_sentinel.channel import (ETU_DELAYS_NS, ETU_POWERS_DB, ChannelConfig,
                                    ChannelRealization, add_awgn, add_interference,
                                    apply_channel, draw_fading, mean_power, tap_delay_samples)
from prach_sentinel.exceptions import InvalidArgumentError, InvalidConfigError
from prach_sentinel.waveform import PrachNumerology, modulate
from prach_sentinel.zc import preamble_from_index

SINGLE = dict(tap_delays_ns=(0.0,), tap_powers_db=(0.0,))


def test_etu_profile_constants():
    assert ETU_DELAYS_NS == (0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0)
    assert ETU_POWERS_DB == (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0)
    p = ChannelConfig().normalized_tap_powers()
    assert abs(p.sum() - 1.0) < 1e-12


def test_etu_delays_in_samples():
    np.testing.assert_array_equal(tap_delay_samples(ETU_DELAYS_NS, 1.28e6), [0, 0, 0, 0, 0, 1, 2, 3, 6])


@pytest.mark.parametrize("kw", [dict(tap_delays_ns=(0.0, 1.0), tap_powers_db=(0.0,)),
                                dict(n_rx=0), dict(n_sinusoids=0), dict(doppler_hz=-1.0),
                                dict(mimo_correlation="extreme")])
def test_config_validation(kw):
    with pytest.raises(InvalidConfigError):
        ChannelConfig(**kw).validate()


def test_matches_direct_cosine_sum():
    cfg = ChannelConfig(seed=5)
    t = np.arange(300) / 1.28e6
    ref = gmeds_gains(5, 3, cfg.normalized_tap_powers(), 2, 70.0, 32, t)
    got = draw_fading(cfg, 300, rng_stream=3).gains
    np.testing.assert_allclose(got, ref, atol=1e-12, rtol=0)


def test_zero_doppler_freezes_gain():
    g = draw_fading(ChannelConfig(doppler_hz=0.0, seed=9, **SINGLE), 500).gains
    assert np.ptp(np.abs(g), axis=-1).max() == 0
    g2 = draw_fading(ChannelConfig(doppler_hz=0.0, seed=10, **SINGLE), 500).gains
    assert not np.allclose(g[..., 0], g2[..., 0])


def test_determinism_and_streams():
    cfg = ChannelConfig(seed=3)
    a = draw_fading(cfg, 100, 0).gains
    np.testing.assert_array_equal(a, draw_fading(cfg, 100, 0).gains)
    assert not np.allclose(a, draw_fading(cfg, 100, 1).gains)


def test_draw_fading_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        draw_fading(ChannelConfig(), 0)


def test_unit_mean_gain():
    # independent draws: many seeds, one sample each, summed over ETU taps
    total = np.concatenate([
        (np.abs(draw_fading(ChannelConfig(seed=s), 1).gains[..., 0]) ** 2).sum(axis=1)
        for s in range(5000)])
    assert abs(total.mean() - 1.0) < 0.02 * 2.5


def test_rayleigh_ks():
    amp = np.concatenate([np.abs(draw_fading(ChannelConfig(seed=s, **SINGLE), 1).gains.ravel())
                          for s in range(5000)])
    assert amp.size == 10_000
    # unit-power Rayleigh has scale 1/sqrt(2)
    assert stats.kstest(amp, "rayleigh", args=(0, np.sqrt(0.5))).pvalue > 0.01


def test_jakes_autocorrelation():
    fs, n = 10_000.0, 40
    acc, count = np.zeros(n, complex), 0
    for s in range(300):
        g = draw_fading(ChannelConfig(seed=s, **SINGLE), n, 0, fs).gains.reshape(-1, n)
        acc += (g[:, :1].conj() * g).sum(axis=0)
        count += g.shape[0]
    tau = np.arange(n) / fs
    keep = tau <= 1 / (4 * 70.0)
    assert np.max(np.abs((acc / count).real - j0(2 * np.pi * 70.0 * tau))[keep]) < 0.05


@pytest.mark.parametrize("level,rho", [("medium", 0.3), ("high", 0.9)])
def test_mimo_correlation(level, rho):
    g = np.stack([draw_fading(ChannelConfig(seed=s, mimo_correlation=level, **SINGLE), 1).gains[:, 0, 0]
                  for s in range(4000)])
    c = np.mean(g[:, 0] * g[:, 1].conj()) / np.sqrt(np.mean(np.abs(g[:, 0]) ** 2) * np.mean(np.abs(g[:, 1]) ** 2))
    assert abs(c.real - rho) < 0.05


def _real(gains, delays_ns):
    return ChannelRealization(gains=np.asarray(gains, complex), tap_delays_ns=tuple(delays_ns),
                              sample_rate_hz=1.28e6)


def test_identity_and_single_echo():
    num = PrachNumerology()
    x = modulate(preamble_from_index(22, 32)).samples
    np.testing.assert_array_equal(apply_channel(x, _real(np.ones((1, 1, 1280)), [0.0]), num)[0], x)
    d3 = 3 / 1.28e6 * 1e9
    y = apply_channel(x, _real(np.ones((1, 1, 1280)), [d3]), num)[0]
    np.testing.assert_array_equal(y[3:], x[:-3])
    assert np.all(y[:3] == 0)


def test_apply_channel_errors():
    num = PrachNumerology()
    x = np.ones(1280, complex)
    with pytest.raises(InvalidConfigError):
        apply_channel(x, _real(np.ones((1, 1, 1280)), [200e3]), num)
    with pytest.raises(InvalidArgumentError):
        apply_channel(x, _real(np.ones((1, 1, 100)), [0.0]), num)


def test_interference_power_ratio(rng):
    rx = rng.standard_normal((2, 1280)) + 1j * rng.standard_normal((2, 1280))
    itf = 3 * (rng.standard_normal((2, 1280)) + 1j * rng.standard_normal((2, 1280)))
    np.testing.assert_allclose(add_interference(rx, itf, -300.0), rx, atol=1e-12)
    for db in (0.0, -6.0):
        added = add_interference(rx, itf, db) - rx
        ratio = mean_power(added) / mean_power(rx)
        assert abs(ratio / 10 ** (db / 10) - 1) < 1e-9
        # linear in the interferer with one real factor
        k = added / itf
        assert np.ptp(k.real) < 1e-12 and np.max(np.abs(k.imag)) < 1e-12
    with pytest.raises(InvalidArgumentError):
        add_interference(rx, itf[:1], 0.0)


def test_awgn(rng):
    rx = np.zeros((2, 1280), complex) + 1.0
    np.testing.assert_allclose(add_awgn(rx, 300.0, 1), rx, atol=1e-12)
    np.testing.assert_array_equal(add_awgn(rx, -3.0, 7), add_awgn(rx, -3.0, 7))
    sig = np.exp(2j * np.pi * rng.random((2, 50_000)))
    noise = add_awgn(sig, -12.0, 11) - sig
    measured = 10 * np.log10(mean_power(sig) / mean_power(noise))
    assert abs(measured + 12.0) < 0.1


@given(snr=st.floats(-20, 20), seed=st.integers(0, 2**63))
@settings(max_examples=20, deadline=None)
def test_awgn_antenna_independence(snr, seed):
    out = add_awgn(np.zeros((2, 256), complex) + 1, snr, seed)
    assert not np.allclose(out[0], out[1])
