import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irml.channel import (ChannelModel, estimate_channel, parse_fading, pilot_sequence,
                          snr_to_noise_var, transmit, transmit_with_pilot)
from irml.codec import encode, init_table
from irml.errors import ConfigError, NumericalError


def test_snr_conversion_examples():
    assert snr_to_noise_var(0, 1.0) == 1.0
    assert snr_to_noise_var(10, 1.0) == pytest.approx(0.1, abs=1e-15)
    # 3 dB at P=2: 2 / 10**0.3
    assert snr_to_noise_var(3, 2.0) == pytest.approx(1.0023744672545445, rel=1e-12)
    assert snr_to_noise_var(math.inf, 1.0) == 0.0


def test_snr_rejects_zero_power():
    with pytest.raises(NumericalError):
        snr_to_noise_var(0, 0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ChannelModel(fading="bogus")
    with pytest.raises(ConfigError):
        ChannelModel(snr_db=float("nan"))
    with pytest.raises(ConfigError):
        ChannelModel(fading="fixed", g=0.0)
    assert parse_fading("fixed:2.5") == ("fixed", 2.5)
    with pytest.raises(ConfigError):
        parse_fading("fixed:abc")


def test_noiseless_identity():
    s = np.random.default_rng(0).normal(size=64)
    rx = transmit(s, ChannelModel(snr_db=math.inf))
    assert np.array_equal(rx.samples, s)


def test_fixed_gain_doubles():
    s = np.random.default_rng(1).normal(size=64)
    rx = transmit(s, ChannelModel(fading="fixed", g=2.0, snr_db=math.inf))
    assert np.array_equal(rx.samples, 2.0 * s)


def test_noise_variance_at_zero_db():
    # +-1 signal has power exactly 1, so 0 dB means unit noise variance
    n = 100_000
    s = np.where(np.arange(n) % 2, 1.0, -1.0)
    rx = transmit(s, ChannelModel(snr_db=0.0, seed=11))
    resid = rx.samples - s
    var = float(np.mean(resid ** 2))
    # std of the mean of n chi-square(1) samples is sqrt(2/n)
    assert abs(var - 1.0) <= 3 * math.sqrt(2.0 / n)
    assert rx.noise_var == 1.0


def test_deterministic_and_independent_streams():
    s = np.ones(32)
    m = ChannelModel(snr_db=5.0, seed=4)
    a, b, c = transmit(s, m, 0), transmit(s, m, 0), transmit(s, m, 1)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_linear_in_signal(a, seed):
    s = np.random.default_rng(seed).normal(size=16)
    m = ChannelModel(fading="fixed", g=1.5, seed=seed, noise_var=0.3)
    base = transmit(s, m).samples - 1.5 * s  # the noise realization
    scaled = transmit(a * s, m).samples
    assert np.allclose(scaled, 1.5 * a * s + base, atol=1e-12)


def test_rayleigh_gain_mean_square():
    gains = [transmit(np.ones(4), ChannelModel(fading="rayleigh", snr_db=math.inf, seed=0), i).g
             for i in range(20_000)]
    g2 = np.square(gains)
    assert abs(g2.mean() - 1.0) < 3 * g2.std() / math.sqrt(len(g2))


def test_empty_signal():
    with pytest.raises(ValueError):
        transmit(np.zeros(0), ChannelModel())


def test_encoded_signal_keeps_layout():
    tab = init_table(5, 2, 3, 0)
    sig = encode([0, 3, 4], tab)
    rx = transmit(sig, ChannelModel(snr_db=math.inf))
    assert rx.n_symbols == 3
    assert np.array_equal(rx.symbols(), tab.entity_vecs[[0, 3, 4]])


# ---------------------------------------------------------------- estimation

def test_estimate_noiseless():
    s = pilot_sequence(64, 1.0)
    g, v = estimate_channel(s, 1.5 * s)
    assert g == 1.5 and v == 0.0


def test_estimate_zero_received():
    s = pilot_sequence(64, 2.0)
    g, v = estimate_channel(s, np.zeros(64))
    # residual r - g*s is identically zero when r = 0 and g = 0
    assert g == 0.0 and v == 0.0


def test_estimate_errors():
    with pytest.raises(NumericalError):
        estimate_channel(np.zeros(16), np.zeros(16))
    with pytest.raises(ValueError):
        estimate_channel(np.ones(4), np.ones(4))


def test_estimate_accuracy_over_seeds():
    s = pilot_sequence(1000, 1.0)
    ok = 0
    for seed in range(200):
        rx = transmit(s, ChannelModel(snr_db=0.0, seed=seed))
        g, _ = estimate_channel(s, rx.samples)
        ok += abs(g - 1.0) < 0.1
    assert ok / 200 >= 0.99


def test_pilot_shares_gain():
    tab = init_table(5, 2, 4, 0)
    sig = encode([1, 2], tab)
    m = ChannelModel(fading="fixed", g=0.7, snr_db=math.inf)
    body, sent, recv = transmit_with_pilot(sig, m)
    g, v = estimate_channel(sent, recv)
    assert g == pytest.approx(0.7, abs=1e-12) and v == pytest.approx(0.0, abs=1e-24)
    assert np.allclose(body.samples, 0.7 * sig.samples)
