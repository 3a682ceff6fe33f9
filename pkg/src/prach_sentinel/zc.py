"""
Zadoff-Chu root sequences and cyclically shifted PRACH preambles.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import IndexExhaustedError, InvalidArgumentError

__all__ = [
    "ZcSequence",
    "Preamble",
    "is_prime",
    "zc_root",
    "cyclic_shift",
    "preamble_from_index",
    "DEFAULT_N_ZC",
    "DEFAULT_N_CS",
]

DEFAULT_N_ZC = 839
DEFAULT_N_CS = 13
MAX_PREAMBLES = 64


def is_prime(n):
    n = int(n)
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True, eq=False)
class ZcSequence:
    """A (possibly shifted) Zadoff-Chu sequence of prime length."""

    data: np.ndarray
    root_u: int
    n_zc: int

    def __len__(self):
        return self.n_zc

    def __getitem__(self, item):
        return self.data[item]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True, eq=False)
class Preamble:
    sequence: ZcSequence
    cyclic_shift_cv: int
    preamble_index_v: int
    n_cs: int

    @property
    def root_u(self):
        return self.sequence.root_u


def zc_root(u, n_zc=DEFAULT_N_ZC):
    """
    Root Zadoff-Chu sequence ``exp(-j*pi*u*n*(n+1)/n_zc)``.

    The phase numerator is reduced modulo ``2*n_zc`` in exact integer
    arithmetic before the floating-point division.

    Parameters
    ----------
    u : int
        Root index, ``1 <= u <= n_zc - 1``.
    n_zc : int
        Prime sequence length.

    Returns
    -------
    ZcSequence
    """
    u, n_zc = int(u), int(n_zc)
    if not is_prime(n_zc):
        raise InvalidArgumentError(f"n_zc must be prime, got {n_zc}")
    if not 1 <= u <= n_zc - 1:
        raise InvalidArgumentError(f"root u must be in [1, {n_zc - 1}], got {u}")
    n = np.arange(n_zc, dtype=np.int64)
    two_n = 2 * n_zc
    m = ((n * (n + 1)) % two_n) * u % two_n
    data = np.exp(-1j * np.pi * m.astype(np.float64) / n_zc)
    data.setflags(write=False)
    return ZcSequence(data=data, root_u=u, n_zc=n_zc)


def cyclic_shift(seq, cv):
    """Return ``seq[(n + cv) mod n_zc]``; ``cv`` is reduced modulo the length."""
    cv = int(cv)
    if cv < 0:
        raise InvalidArgumentError(f"cyclic shift must be non-negative, got {cv}")
    data = np.roll(seq.data, -(cv % seq.n_zc))
    data.setflags(write=False)
    return ZcSequence(data=data, root_u=seq.root_u, n_zc=seq.n_zc)


def preamble_from_index(u, v, n_cs=DEFAULT_N_CS, n_zc=DEFAULT_N_ZC):
    """Unrestricted-set preamble ``v`` of root ``u``: shift ``C_v = v * n_cs``."""
    v, n_cs, n_zc = int(v), int(n_cs), int(n_zc)
    if v < 0 or v >= MAX_PREAMBLES:
        raise InvalidArgumentError(f"preamble index must be in [0, {MAX_PREAMBLES - 1}], got {v}")
    if n_cs < 1:
        raise InvalidArgumentError(f"n_cs must be >= 1, got {n_cs}")
    cv = v * n_cs
    if cv >= n_zc:
        raise IndexExhaustedError(
            f"preamble {v} needs shift {cv} >= n_zc={n_zc}; multi-root allocation is not supported"
        )
    seq = cyclic_shift(zc_root(u, n_zc), cv)
    return Preamble(sequence=seq, cyclic_shift_cv=cv, preamble_index_v=v, n_cs=n_cs)
