"""
Multipath Rayleigh fading, co-channel PRACH interference and AWGN.

Tap gains follow a sum-of-sinusoids generator with the angle layout of the
generalized method of exact Doppler spread (GMEDS1): for component ``i`` of
path ``l`` out of ``L``::

    alpha_{i,n} = pi/(2N) * (n - 1/2) + (-1)**(i-1) * pi/(4N) * l/(L+2)
    mu_i(t)     = sqrt(1/N) * sum_n cos(2*pi*f_d*cos(alpha_{i,n})*t + theta_{i,n})

with seeded uniform phases ``theta``. ``g = mu_1 + j*mu_2`` has unit mean
power before the tap power is applied.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .exceptions import InvalidArgumentError, InvalidConfigError

__all__ = [
    "ETU_DELAYS_NS",
    "ETU_POWERS_DB",
    "MIMO_CORRELATION",
    "ChannelConfig",
    "ChannelRealization",
    "RxObservation",
    "draw_fading",
    "apply_channel",
    "add_interference",
    "add_awgn",
    "mean_power",
]

# 3GPP TS 36.104 Extended Typical Urban
ETU_DELAYS_NS = (0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0)
ETU_POWERS_DB = (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0)

MIMO_CORRELATION = {"low": 0.0, "medium": 0.3, "high": 0.9}


@dataclass(frozen=True)
class ChannelConfig:
    n_rx: int = 2
    doppler_hz: float = 70.0
    tap_delays_ns: tuple = ETU_DELAYS_NS
    tap_powers_db: tuple = ETU_POWERS_DB
    mimo_correlation: str = "low"
    n_sinusoids: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tap_delays_ns", tuple(float(d) for d in self.tap_delays_ns))
        object.__setattr__(self, "tap_powers_db", tuple(float(p) for p in self.tap_powers_db))

    def validate(self):
        if len(self.tap_delays_ns) != len(self.tap_powers_db) or not self.tap_delays_ns:
            raise InvalidConfigError("tap_delays_ns and tap_powers_db must be non-empty and equal length")
        if self.n_rx < 1:
            raise InvalidConfigError(f"n_rx must be >= 1, got {self.n_rx}")
        if self.n_sinusoids < 1:
            raise InvalidConfigError(f"n_sinusoids must be >= 1, got {self.n_sinusoids}")
        if self.doppler_hz < 0:
            raise InvalidConfigError(f"doppler_hz must be >= 0, got {self.doppler_hz}")
        if self.mimo_correlation not in MIMO_CORRELATION:
            raise InvalidConfigError(
                f"mimo_correlation must be one of {sorted(MIMO_CORRELATION)}, got {self.mimo_correlation!r}"
            )
        if any(d < 0 for d in self.tap_delays_ns):
            raise InvalidConfigError("tap delays must be non-negative")
        return self

    def normalized_tap_powers(self):
        p = 10.0 ** (np.asarray(self.tap_powers_db) / 10.0)
        return p / p.sum()

    def to_dict(self):
        d = asdict(self)
        d["tap_delays_ns"] = list(self.tap_delays_ns)
        d["tap_powers_db"] = list(self.tap_powers_db)
        return d


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Tap gain trajectories ``gains[rx, tap, t]`` for one channel draw."""

    gains: np.ndarray
    tap_delays_ns: tuple
    sample_rate_hz: float

    @property
    def n_samples(self):
        return self.gains.shape[-1]


@dataclass(frozen=True, eq=False)
class RxObservation:
    per_antenna: np.ndarray
    snr_db: float
    interf_power_db: float | None
    seed: int
    label_interference: bool

    @property
    def n_rx(self):
        return self.per_antenna.shape[0]


def _sqrtm_psd(r):
    w, v = np.linalg.eigh(r)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def draw_fading(cfg, n_samples, rng_stream=0, sample_rate_hz=1.28e6):
    """
    Draw a seeded GMEDS1 Rayleigh realization.

    Parameters
    ----------
    cfg : ChannelConfig
    n_samples : int
        Length of every tap trajectory.
    rng_stream : int
        Stream index mixed with ``cfg.seed``; distinct streams give
        independent realizations of the same profile.
    sample_rate_hz : float
        Time step of the trajectory.

    Returns
    -------
    ChannelRealization
    """
    cfg.validate()
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise InvalidArgumentError(f"n_samples must be positive, got {n_samples}")
    rng = np.random.default_rng([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, int(rng_stream)])
    n_rx, n_taps, n_sin = cfg.n_rx, len(cfg.tap_delays_ns), cfg.n_sinusoids
    n_paths = n_rx * n_taps

    n_idx = np.arange(1, n_sin + 1)
    path_idx = np.arange(1, n_paths + 1)[:, None, None]
    sign = np.array([1.0, -1.0])[None, :, None]
    alpha = np.pi / (2 * n_sin) * (n_idx - 0.5)[None, None, :] \
        + sign * np.pi / (4 * n_sin) * path_idx / (n_paths + 2)
    freqs = cfg.doppler_hz * np.cos(alpha)                    # [paths, 2, N]
    theta = rng.uniform(0.0, 2 * np.pi, size=freqs.shape)

    # exp(j*w*(t_b + tau)) = exp(j*w*t_b) * exp(j*w*tau): the sum over
    # sinusoids becomes a batched (blocks x N) @ (N x block) product
    block = int(np.ceil(np.sqrt(n_samples)))
    n_blocks = -(-n_samples // block)
    w = 2 * np.pi * freqs / sample_rate_hz                      # rad/sample
    coarse = np.exp(1j * (w[..., None] * (block * np.arange(n_blocks)) + theta[..., None]))
    fine = np.exp(1j * w[..., None] * np.arange(block))
    mu = np.matmul(coarse.swapaxes(-1, -2), fine).real.reshape(n_paths, 2, -1)
    mu = mu[..., :n_samples] * np.sqrt(1.0 / n_sin)              # [paths, 2, T]
    g = (mu[:, 0] + 1j * mu[:, 1]).reshape(n_rx, n_taps, n_samples)

    rho = MIMO_CORRELATION[cfg.mimo_correlation]
    if rho and n_rx > 1:
        r = np.full((n_rx, n_rx), rho) + (1.0 - rho) * np.eye(n_rx)
        g = np.einsum("ij,jkt->ikt", _sqrtm_psd(r), g)

    g *= np.sqrt(cfg.normalized_tap_powers())[None, :, None]
    return ChannelRealization(gains=g, tap_delays_ns=cfg.tap_delays_ns,
                              sample_rate_hz=float(sample_rate_hz))


def tap_delay_samples(tap_delays_ns, sample_rate_hz):
    return np.rint(np.asarray(tap_delays_ns) * 1e-9 * sample_rate_hz).astype(int)


def apply_channel(burst, real, num):
    """Tapped delay line: ``y_a(t) = sum_tap g[a, tap, t] * x(t - d_tap)``."""
    x = np.asarray(getattr(burst, "samples", burst), dtype=np.complex128)
    n = x.size
    if real.n_samples < n:
        raise InvalidArgumentError(
            f"realization has {real.n_samples} samples, burst needs {n}"
        )
    delays = tap_delay_samples(real.tap_delays_ns, num.sample_rate_hz)
    if delays.max() > num.gp_len:
        raise InvalidConfigError(
            f"tap delay of {delays.max()} samples exceeds gp_len {num.gp_len}"
        )
    out = np.zeros((real.gains.shape[0], n), dtype=np.complex128)
    for k, d in enumerate(delays):
        shifted = np.zeros(n, dtype=np.complex128)
        shifted[d:] = x[:n - d]
        out += real.gains[:, k, :n] * shifted
    return out


def mean_power(rx, body=None):
    """Mean per-sample power over ``body``, averaged across antennas."""
    rx = np.atleast_2d(np.asarray(rx))
    seg = rx if body is None else rx[:, body]
    return float(np.mean(np.abs(seg) ** 2))


def add_interference(rx, interferer, rel_power_db, body=None):
    """
    Add ``interferer`` scaled to sit ``rel_power_db`` relative to ``rx``.

    Both powers are measured over ``body`` (whole buffer when ``None``) and
    averaged across antennas, so one real factor scales every antenna.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=np.complex128))
    interferer = np.atleast_2d(np.asarray(interferer, dtype=np.complex128))
    if rx.shape != interferer.shape:
        raise InvalidArgumentError(
            f"shape mismatch: rx {rx.shape} vs interferer {interferer.shape}"
        )
    p_i = mean_power(interferer, body)
    if p_i == 0.0:
        return rx.copy()
    alpha = np.sqrt(mean_power(rx, body) / p_i * 10.0 ** (rel_power_db / 10.0))
    return rx + alpha * interferer


def add_awgn(rx, snr_db, seed, body=None, reference_power=None):
    """
    Add circular complex Gaussian noise at ``snr_db``.

    The reference power defaults to the body power of ``rx`` averaged over
    antennas; pass ``reference_power`` to pin SNR to a different signal.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=np.complex128))
    p_s = mean_power(rx, body) if reference_power is None else float(reference_power)
    noise_var = p_s / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    noise = rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape)
    return rx + np.sqrt(noise_var / 2.0) * noise
