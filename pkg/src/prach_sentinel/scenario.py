"""
End-to-end observation synthesis and classifier feature extraction.

One observation is the signal preamble through its own fading channel,
optionally mixed with an interfering preamble through an independent
channel, plus AWGN. SNR is referenced to the faded desired signal only.
"""

from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .channel import (ChannelConfig, RxObservation, add_awgn, add_interference,
                      apply_channel, draw_fading, mean_power)
from .exceptions import InvalidConfigError
from .receiver import front_end
from .waveform import PrachNumerology, apply_delay, apply_frequency_offset, modulate
from .zc import DEFAULT_N_CS, preamble_from_index, zc_root

__all__ = [
    "PrachConfig",
    "ScenarioConfig",
    "FEATURE_SHAPE",
    "FEATURE_DOMAINS",
    "simulate_observation",
    "extract_features",
    "observation_to_features",
]

FEATURE_SHAPE = (24, 35, 4)
FEATURE_DOMAINS = ("bins", "derotated", "correlation", "power")
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class PrachConfig:
    """One UE's preamble: root (sequence index), preamble index, shift step."""

    seq_idx: int = 22
    preamble_index: int = 32
    n_cs: int = DEFAULT_N_CS
    freq_offset_hz: float = 0.0
    delay_samples: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    numerology: PrachNumerology = field(default_factory=PrachNumerology)
    signal: PrachConfig = field(default_factory=PrachConfig)
    interferer: PrachConfig = field(default_factory=lambda: PrachConfig(preamble_index=3))
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    feature_domain: str = "power"

    def validate(self):
        self.numerology.validate()
        self.channel.validate()
        if self.feature_domain not in FEATURE_DOMAINS:
            raise InvalidConfigError(
                f"feature_domain must be one of {FEATURE_DOMAINS}, got {self.feature_domain!r}"
            )
        for name in ("signal", "interferer"):
            p = getattr(self, name)
            preamble_from_index(p.seq_idx, p.preamble_index, p.n_cs, self.numerology.n_zc)
        if self.channel.n_rx * 2 != FEATURE_SHAPE[2]:
            raise InvalidConfigError(
                f"classifier features need {FEATURE_SHAPE[2] // 2} antennas, got {self.channel.n_rx}"
            )
        return self

    def to_dict(self):
        return {
            "numerology": self.numerology.to_dict(),
            "signal": asdict(self.signal),
            "interferer": asdict(self.interferer),
            "channel": self.channel.to_dict(),
            "feature_domain": self.feature_domain,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            numerology=PrachNumerology(**d.get("numerology", {})),
            signal=PrachConfig(**d.get("signal", {})),
            interferer=PrachConfig(**{"preamble_index": 3, **d.get("interferer", {})}),
            channel=ChannelConfig(**d.get("channel", {})),
            feature_domain=d.get("feature_domain", "power"),
        )


def _transmit(p, num):
    burst = modulate(preamble_from_index(p.seq_idx, p.preamble_index, p.n_cs, num.n_zc), num)
    burst = apply_delay(burst, p.delay_samples)
    return apply_frequency_offset(burst, p.freq_offset_hz)


def simulate_observation(cfg, snr_db, interf_db=None, seed=0):
    """
    Received buffers for one PRACH occasion.

    ``interf_db`` of ``None`` means no interferer. Fading streams 0/1 of
    the channel seeded with ``seed`` drive the signal/interferer channels;
    the noise draws from a third derived stream.
    """
    num = cfg.numerology
    seed = int(seed) & _MASK64
    ch = replace(cfg.channel, seed=seed)
    n = num.burst_len
    sig_fade = draw_fading(ch, n, rng_stream=0, sample_rate_hz=num.sample_rate_hz)
    rx = apply_channel(_transmit(cfg.signal, num), sig_fade, num)
    p_signal = mean_power(rx, num.body)
    if interf_db is not None:
        int_fade = draw_fading(ch, n, rng_stream=1, sample_rate_hz=num.sample_rate_hz)
        interf = apply_channel(_transmit(cfg.interferer, num), int_fade, num)
        rx = add_interference(rx, interf, interf_db, body=num.body)
    noise_seed = int(np.random.SeedSequence([seed, 2]).generate_state(1, np.uint64)[0])
    rx = add_awgn(rx, snr_db, noise_seed, body=num.body, reference_power=p_signal)
    return RxObservation(
        per_antenna=rx,
        snr_db=float(snr_db),
        interf_power_db=None if interf_db is None else float(interf_db),
        seed=seed,
        label_interference=interf_db is not None,
    )


def _standardize(channels):
    mean = channels.mean(axis=(0, 1), keepdims=True)
    std = channels.std(axis=(0, 1), keepdims=True)
    return (channels - mean) / np.maximum(std, 1e-12)


def extract_features(bins, domain="power", root=None):
    """
    Turn demapped bins ``[n_rx, n_zc]`` into a ``[24, 35, 2*n_rx]`` tensor.

    ``domain`` picks the receiver stage whose output is fed to the
    classifier: raw demapped bins, bins multiplied by the conjugate root
    spectrum, the complex cyclic correlation after the IFFT, or the
    per-antenna power delay profile.

    The complex domains give each antenna a real and an imaginary
    channel. ``"power"`` gives each antenna the delay profile divided by
    its median and the same profile in dB clipped at 0 dB, so lags below
    the noise floor carry no nuisance variance. Every channel is
    zero-padded to 840, laid out row-major and standardized.
    """
    bins = np.atleast_2d(np.asarray(bins, dtype=np.complex128))
    if domain != "bins":
        if root is None:
            raise InvalidConfigError(f"feature domain {domain!r} needs the local root")
        r = np.asarray(getattr(root, "data", root))
        bins = bins * np.conj(np.fft.fft(r)) / r.size
        if domain in ("correlation", "power"):
            bins = np.fft.ifft(bins, axis=1) * r.size
        elif domain != "derotated":
            raise InvalidConfigError(f"unknown feature domain {domain!r}")
    h, w, c = FEATURE_SHAPE
    if 2 * bins.shape[0] != c or bins.shape[1] > h * w:
        raise InvalidConfigError(f"cannot lay out bins of shape {bins.shape} as {FEATURE_SHAPE}")
    planes = np.zeros((c, h * w))
    if domain == "power":
        # per-antenna delay profile, linear and in dB
        p = np.abs(bins) ** 2
        p = p / np.maximum(np.median(p, axis=1, keepdims=True), 1e-300)
        planes[0::2, :bins.shape[1]] = p
        planes[1::2, :bins.shape[1]] = np.maximum(10 * np.log10(p + 1e-12), 0.0)
    else:
        planes[0::2, :bins.shape[1]] = bins.real
        planes[1::2, :bins.shape[1]] = bins.imag
    feats = planes.reshape(c, h, w).transpose(1, 2, 0)
    return _standardize(feats)


def observation_to_features(obs, cfg):
    num = cfg.numerology
    fobs = front_end(obs, num)
    root = zc_root(cfg.signal.seq_idx, num.n_zc)
    return extract_features(fobs.bins, cfg.feature_domain, root).astype(np.float32)
