"""
Conventional correlation receiver for format-0 PRACH.

Chain: strip CP/GP, frequency shift, (optional) decimation, FFT,
sub-carrier demapping, multiply by the conjugated local root spectrum,
IFFT, non-coherent combining over antennas, windowed peak search.

Lag convention
--------------
The power delay profile (PDP) is indexed by correlation lag. A preamble
sent with cyclic shift ``C_v = v*n_cs`` and delayed by ``d`` burst samples
peaks at lag ``(d*n_zc/fft_size - C_v) mod n_zc``, so the detection window
of preamble ``v`` starts at ``(-v*n_cs) mod n_zc`` and extends ``n_cs``
lags upward. The timing offset is the peak position within that window in
correlation samples; multiply by ``fft_size/n_zc`` to get burst samples.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import InvalidArgumentError, MalformedInputError
from .zc import DEFAULT_N_CS, MAX_PREAMBLES

__all__ = [
    "DetectionResult",
    "FrequencyObservation",
    "front_end",
    "correlate",
    "window_peaks",
    "detect",
    "window_start",
    "DEFAULT_THRESHOLD_FACTOR",
]

DEFAULT_THRESHOLD_FACTOR = 13.0
# keeps the threshold meaningful on noiseless PDPs whose median is round-off
NOISE_FLOOR_REL = 1e-9


@dataclass(frozen=True)
class DetectionResult:
    detected: bool
    rapid_v: int | None
    timing_offset_samples: int | None
    peak_metric: float
    noise_floor: float
    threshold: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FrequencyObservation:
    """Demapped occupied bins, ``bins[rx, k]`` with ``k < n_zc``."""

    bins: np.ndarray

    @property
    def n_rx(self):
        return self.bins.shape[0]

    def __len__(self):
        return self.bins.shape[1]


def _as_antenna_array(rx):
    data = getattr(rx, "per_antenna", rx)
    return np.atleast_2d(np.asarray(data, dtype=np.complex128))


def front_end(rx, num, df_correction_hz=0.0, decim=1):
    """
    Steps CP/GP removal through sub-carrier demapping.

    Demapped bins are scaled by ``n_zc/fft_size`` so a clean burst from
    :func:`~prach_sentinel.waveform.modulate` returns the preamble DFT.

    With ``decim > 1`` the occupied block is mixed down to DC, filtered
    with a circular brick-wall lowpass (the CP-free body is one period, so
    the filter is exact) and every ``decim``-th sample kept before a
    ``fft_size/decim``-point FFT.
    """
    x = _as_antenna_array(rx)
    decim = int(decim)
    if decim < 1 or num.fft_size % decim:
        raise InvalidArgumentError(f"decim must be >= 1 and divide fft_size, got {decim}")
    if x.shape[1] < num.burst_len:
        raise MalformedInputError(
            f"buffer of {x.shape[1]} samples is shorter than the {num.burst_len}-sample burst"
        )
    m = num.fft_size
    body = x[:, num.cp_len:num.cp_len + m]
    n = np.arange(m)
    if df_correction_hz:
        body = body * np.exp(-2j * np.pi * df_correction_hz * n / num.sample_rate_hz)

    if decim == 1:
        spec = np.fft.fft(body, axis=1)
        bins = spec[:, num.subcarrier_offset:num.subcarrier_offset + num.n_zc]
    else:
        m_dec = m // decim
        if num.n_zc > m_dec:
            raise InvalidArgumentError(
                f"{num.n_zc} occupied bins do not fit a {m_dec}-point FFT after decimation by {decim}"
            )
        half = num.n_zc // 2
        center = num.subcarrier_offset + half
        mixed = body * np.exp(-2j * np.pi * center * n / m)
        spec = np.fft.fft(mixed, axis=1)
        freq = np.fft.fftfreq(m, d=1.0 / m)
        spec[:, (freq < -m_dec // 2) | (freq >= m_dec - m_dec // 2)] = 0.0
        lowpassed = np.fft.ifft(spec, axis=1)
        dec = np.fft.fft(lowpassed[:, ::decim], axis=1) * decim
        bins = dec[:, (np.arange(num.n_zc) - half) % m_dec]
    return FrequencyObservation(bins=bins * (num.n_zc / m))


def correlate(obs, root):
    """Non-coherent PDP: ``sum_rx |IFFT(bins * conj(DFT(root)))|**2``."""
    bins = obs.bins if isinstance(obs, FrequencyObservation) else np.atleast_2d(obs)
    r = np.asarray(getattr(root, "data", root), dtype=np.complex128)
    if bins.shape[-1] != r.size:
        raise InvalidArgumentError(
            f"root length {r.size} does not match {bins.shape[-1]} bins"
        )
    corr = np.fft.ifft(bins * np.conj(np.fft.fft(r)), axis=-1)
    return np.sum(np.abs(corr) ** 2, axis=0)


def window_start(v, n_cs, n_zc):
    return (-int(v) * int(n_cs)) % int(n_zc)


def window_peaks(pdp, n_cs=DEFAULT_N_CS, n_preambles=MAX_PREAMBLES):
    """
    Per-preamble window maxima.

    Returns
    -------
    peaks : ndarray, shape (n_preambles,)
    offsets : ndarray of int, shape (n_preambles,)
        Position of each maximum within its window.
    """
    pdp = np.asarray(pdp, dtype=np.float64)
    n_zc = pdp.size
    n_cs = int(n_cs)
    if n_cs < 1:
        raise InvalidArgumentError(f"n_cs must be >= 1, got {n_cs}")
    n_preambles = min(int(n_preambles), n_zc // n_cs)
    starts = (-np.arange(n_preambles) * n_cs) % n_zc
    idx = (starts[:, None] + np.arange(n_cs)[None, :]) % n_zc
    windows = pdp[idx]
    offsets = np.argmax(windows, axis=1)
    return windows[np.arange(n_preambles), offsets], offsets


def detect(pdp, n_cs=DEFAULT_N_CS, threshold_factor=DEFAULT_THRESHOLD_FACTOR,
           n_preambles=MAX_PREAMBLES):
    """
    Signature detection on a combined PDP.

    The noise floor is the PDP median (floored at ``1e-9`` of the PDP
    maximum); the strongest window is declared detected when its peak
    exceeds ``threshold_factor`` times the floor.
    """
    pdp = np.asarray(pdp, dtype=np.float64)
    peaks, offsets = window_peaks(pdp, n_cs, n_preambles)
    noise_floor = max(float(np.median(pdp)), NOISE_FLOOR_REL * float(pdp.max(initial=0.0)))
    threshold = threshold_factor * noise_floor
    best = int(np.argmax(peaks))
    peak = float(peaks[best])
    detected = peak > threshold
    return DetectionResult(
        detected=bool(detected),
        rapid_v=best if detected else None,
        timing_offset_samples=int(offsets[best]) if detected else None,
        peak_metric=peak,
        noise_floor=noise_floor,
        threshold=threshold,
    )
