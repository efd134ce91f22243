"""Physical channel: fading gain plus additive white Gaussian noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .codec import EncodedSignal
from .errors import ConfigError, NumericalError

FADING_MODES = ("unit", "fixed", "rayleigh")


@dataclass(frozen=True)
class ChannelModel:
    """Channel configuration.

    ``snr_db = inf`` means a noiseless channel. ``noise_var`` overrides the
    SNR-derived noise level with an absolute per-sample variance, which
    makes the noise independent of the transmitted power.
    """

    fading: str = "unit"
    g: float = 1.0
    snr_db: float = 10.0
    seed: int = 0
    noise_var: float | None = None
    second_hop_snr_db: float | None = None

    def __post_init__(self):
        if self.fading not in FADING_MODES:
            raise ConfigError(f"fading must be one of {FADING_MODES}, got {self.fading!r}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db must be a number or +inf, got {self.snr_db}")
        if self.fading == "fixed" and self.g == 0:
            raise ConfigError("fixed fading gain must be nonzero")
        if self.noise_var is not None and self.noise_var < 0:
            raise ConfigError("noise_var must be >= 0")

    def with_snr(self, snr_db):
        return replace(self, snr_db=float(snr_db))


def parse_fading(text):
    """``"unit"``, ``"rayleigh"`` or ``"fixed:<g>"`` to ``(mode, g)``."""
    text = text.strip().lower()
    if text in ("unit", "rayleigh"):
        return text, 1.0
    if text.startswith("fixed:"):
        try:
            return "fixed", float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad fixed gain in {text!r}") from exc
    raise ConfigError(f"unknown fading {text!r}; use unit, rayleigh or fixed:<g>")


@dataclass(frozen=True, eq=False)
class ReceivedSignal:
    samples: np.ndarray
    offsets: np.ndarray
    kinds: tuple
    ids: np.ndarray
    g: float
    noise_var: float

    @property
    def n_symbols(self):
        return len(self.offsets) - 1

    def symbols(self):
        w = np.diff(self.offsets)
        return self.samples.reshape(-1, int(w[0]))

    def entity_mask(self):
        return np.array([k == "entity" for k in self.kinds], dtype=bool)


def snr_to_noise_var(snr_db, power):
    """Per-sample noise variance ``power / 10**(snr_db / 10)``."""
    if not power > 0:
        raise NumericalError(f"signal power must be > 0, got {power}")
    if snr_db == math.inf:
        return 0.0
    return float(power / 10.0 ** (snr_db / 10.0))


def message_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def draw_gain(model, rng):
    if model.fading == "unit":
        return 1.0
    if model.fading == "fixed":
        return float(model.g)
    # magnitude of a unit-power complex Gaussian gain, E[g^2] = 1
    x, y = rng.standard_normal(2)
    return float(np.sqrt((x * x + y * y) / 2.0))


def transmit(signal, model, index=0):
    """Send one message; ``index`` picks an independent noise stream.

    Returns:
        ReceivedSignal with the gain and the noise variance actually used.
    """
    samples = np.asarray(signal.samples if isinstance(signal, EncodedSignal) else signal,
                         dtype=np.float64)
    if samples.size == 0:
        raise ValueError("cannot transmit an empty signal")
    rng = message_rng(model.seed, index)
    g = draw_gain(model, rng)
    if model.noise_var is not None:
        var = float(model.noise_var)
    else:
        var = snr_to_noise_var(model.snr_db, float(np.mean(samples ** 2)))
    out = g * samples
    if var > 0:
        out = out + rng.normal(0.0, np.sqrt(var), size=samples.shape)
    if model.second_hop_snr_db is not None and model.second_hop_snr_db != math.inf:
        var2 = snr_to_noise_var(model.second_hop_snr_db, float(np.mean(out ** 2)))
        out = out + rng.normal(0.0, np.sqrt(var2), size=samples.shape)
    if isinstance(signal, EncodedSignal):
        offsets, kinds, ids = signal.offsets, signal.kinds, signal.ids
    else:
        offsets = np.array([0, samples.size])
        kinds, ids = ("entity",), np.zeros(0, dtype=np.int64)
    return ReceivedSignal(out, offsets, kinds, ids, g, var)


def pilot_sequence(length, power, seed=0):
    """Seeded +-sqrt(power) pilot."""
    rng = np.random.default_rng([int(seed), 7])
    return np.sqrt(power) * rng.choice([-1.0, 1.0], size=length)


def transmit_with_pilot(signal, model, index=0, pilot_len=64):
    """Prepend a pilot sharing the message's gain and noise level.

    Returns:
        ``(received_message, pilot_sent, pilot_received)``.
    """
    sig = signal.samples if isinstance(signal, EncodedSignal) else np.asarray(signal)
    power = float(np.mean(np.asarray(sig) ** 2))
    pilot = pilot_sequence(pilot_len, power, seed=model.seed)
    full = np.concatenate([pilot, sig])
    if model.noise_var is None:
        model = replace(model, noise_var=snr_to_noise_var(model.snr_db, power))
    rx = transmit(full, model, index)
    body = ReceivedSignal(rx.samples[pilot_len:], signal.offsets, signal.kinds, signal.ids,
                          rx.g, rx.noise_var) if isinstance(signal, EncodedSignal) else rx
    return body, pilot, rx.samples[:pilot_len]


def estimate_channel(pilot_sent, pilot_received):
    """Least-squares gain and residual noise variance from a pilot."""
    s = np.asarray(pilot_sent, dtype=np.float64)
    r = np.asarray(pilot_received, dtype=np.float64)
    if s.shape != r.shape:
        raise ValueError("pilot lengths differ")
    if s.size < 8:
        raise ValueError("pilot needs at least 8 samples")
    ss = float(s @ s)
    if ss == 0.0:
        raise NumericalError("zero-power pilot")
    g_hat = float(s @ r) / ss
    resid = r - g_hat * s
    return g_hat, float(np.mean(resid ** 2))
