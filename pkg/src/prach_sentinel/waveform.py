"""
Format-0 PRACH burst synthesis: cyclic prefix, OFDM body, guard period.

The default numerology runs at 1.28 MHz (1024-point FFT, 1.25 kHz
subcarriers) with the 3GPP format-0 CP/GP durations scaled by 1024/24576.
"""

from dataclasses import dataclass, replace, asdict

import numpy as np

from .exceptions import InvalidArgumentError
from .zc import DEFAULT_N_ZC, is_prime

__all__ = [
    "PrachNumerology",
    "Burst",
    "modulate",
    "apply_delay",
    "apply_frequency_offset",
    "SUBCARRIER_SPACING_HZ",
]

SUBCARRIER_SPACING_HZ = 1250.0


@dataclass(frozen=True)
class PrachNumerology:
    n_zc: int = DEFAULT_N_ZC
    fft_size: int = 1024
    cp_len: int = 132
    gp_len: int = 124
    subcarrier_offset: int = 12

    @property
    def sample_rate_hz(self):
        return SUBCARRIER_SPACING_HZ * self.fft_size

    @property
    def burst_len(self):
        return self.cp_len + self.fft_size + self.gp_len

    @property
    def body(self):
        """Slice of the burst holding the OFDM body (CP and GP excluded)."""
        return slice(self.cp_len, self.cp_len + self.fft_size)

    def validate(self):
        if not is_prime(self.n_zc):
            raise InvalidArgumentError(f"n_zc must be prime, got {self.n_zc}")
        if self.fft_size <= self.n_zc:
            raise InvalidArgumentError(
                f"fft_size ({self.fft_size}) must exceed n_zc ({self.n_zc})"
            )
        if self.cp_len < 0 or self.gp_len < 0 or self.cp_len > self.fft_size:
            raise InvalidArgumentError(
                f"invalid CP/GP lengths {self.cp_len}/{self.gp_len}"
            )
        if self.subcarrier_offset < 0 or self.subcarrier_offset + self.n_zc > self.fft_size:
            raise InvalidArgumentError(
                f"occupied block [{self.subcarrier_offset}, "
                f"{self.subcarrier_offset + self.n_zc}) exceeds fft_size {self.fft_size}"
            )
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Burst:
    samples: np.ndarray
    numerology: PrachNumerology
    true_v: int
    true_delay: int = 0

    def __len__(self):
        return len(self.samples)


def modulate(preamble, num=PrachNumerology()):
    """
    Build the time-domain burst for ``preamble``.

    The ``n_zc``-point DFT of the preamble goes on bins
    ``[subcarrier_offset, subcarrier_offset + n_zc)``; the inverse FFT is
    scaled to unit mean power, its tail is prepended as the cyclic prefix
    and ``gp_len`` zeros are appended.
    """
    num.validate()
    seq = np.asarray(preamble.sequence.data)
    if seq.size != num.n_zc:
        raise InvalidArgumentError(
            f"preamble length {seq.size} does not match n_zc {num.n_zc}"
        )
    grid = np.zeros(num.fft_size, dtype=np.complex128)
    grid[num.subcarrier_offset:num.subcarrier_offset + num.n_zc] = np.fft.fft(seq)
    body = np.fft.ifft(grid)
    body /= np.sqrt(np.mean(np.abs(body) ** 2))
    samples = np.concatenate(
        [body[num.fft_size - num.cp_len:], body, np.zeros(num.gp_len, dtype=np.complex128)]
    )
    return Burst(samples=samples, numerology=num, true_v=preamble.preamble_index_v)


def apply_delay(burst, d):
    """Delay by ``d`` whole samples; the guard period absorbs the tail."""
    d = int(d)
    if not 0 <= d <= burst.numerology.gp_len:
        raise InvalidArgumentError(
            f"delay {d} outside [0, gp_len={burst.numerology.gp_len}]"
        )
    if d == 0:
        return burst
    out = np.zeros_like(burst.samples)
    out[d:] = burst.samples[:-d]
    return replace(burst, samples=out, true_delay=d)


def apply_frequency_offset(burst, df_hz):
    if df_hz == 0:
        return burst
    n = np.arange(len(burst.samples))
    rot = np.exp(2j * np.pi * df_hz * n / burst.numerology.sample_rate_hz)
    return replace(burst, samples=burst.samples * rot)
