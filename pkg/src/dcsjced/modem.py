"""Frame layout, pilots, interleaving and constellation mapping.

A frame is laid out as ``[pilot | data | guard]``; the guard is all zeros and
must be at least ``channel_len - 1`` long so consecutive frames do not
interfere and circular convolution over a frame equals linear convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

# Primitive polynomials x^n + ... + 1 written as the exponents of the
# feedback taps (the constant term is implicit).
DEFAULT_MSEQ_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
}


class ConfigError(ValueError):
    """Raised for inconsistent link or frame configuration."""


@dataclass(frozen=True)
class FrameConfig:
    n_pilot: int = 63
    n_data: int = 130
    n_guard: int = 25
    n_info_bits: int = 130
    code_rate: Fraction = Fraction(1, 2)
    bits_per_symbol: int = 2
    channel_len: int = 25

    def __post_init__(self):
        rate = Fraction(self.code_rate).limit_denominator(1000)
        object.__setattr__(self, "code_rate", rate)
        if min(self.n_pilot, self.n_data, self.n_guard, self.n_info_bits) < 0:
            raise ConfigError("frame segment lengths must be non-negative")
        if self.channel_len < 1 or self.bits_per_symbol < 1:
            raise ConfigError("channel_len and bits_per_symbol must be positive")
        if self.n_guard < self.channel_len - 1:
            raise ConfigError(
                f"guard length {self.n_guard} shorter than channel_len - 1 = {self.channel_len - 1}"
            )
        n_code = Fraction(self.n_info_bits) / rate
        if n_code != self.n_data * self.bits_per_symbol:
            raise ConfigError(
                f"n_data * bits_per_symbol = {self.n_data * self.bits_per_symbol} "
                f"but n_info_bits / code_rate = {n_code}"
            )

    @property
    def frame_len(self) -> int:
        return self.n_pilot + self.n_data + self.n_guard

    @property
    def n_code_bits(self) -> int:
        return self.n_data * self.bits_per_symbol

    @property
    def pilot_slice(self) -> slice:
        return slice(0, self.n_pilot)

    @property
    def data_slice(self) -> slice:
        return slice(self.n_pilot, self.n_pilot + self.n_data)

    @property
    def guard_slice(self) -> slice:
        return slice(self.n_pilot + self.n_data, self.frame_len)


@dataclass(frozen=True)
class SymbolAlphabet:
    """Constellation points and their bit labels (``labels[n, q]`` is bit q of point n)."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.shape != (points.size, int(np.log2(points.size))):
            raise ConfigError("labels must be (2^Q, Q)")
        if len({tuple(l) for l in labels}) != points.size:
            raise ConfigError("bit labels must be distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> int:
        return self.points.size


def qpsk_gray() -> SymbolAlphabet:
    """Gray-labelled QPSK, ``(b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt(2)``."""
    labels = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int8)
    points = ((1 - 2 * labels[:, 0]) + 1j * (1 - 2 * labels[:, 1])) / np.sqrt(2)
    return SymbolAlphabet(points, labels)


@dataclass
class Frame:
    symbols: np.ndarray
    pilot_mask: np.ndarray = field(repr=False)
    data_mask: np.ndarray = field(repr=False)
    guard_mask: np.ndarray = field(repr=False)

    @property
    def pilot(self) -> np.ndarray:
        return self.symbols[self.pilot_mask]

    @property
    def data(self) -> np.ndarray:
        return self.symbols[self.data_mask]


def generate_m_sequence(degree: int, taps=None, seed_state=None) -> np.ndarray:
    """Maximal-length +/-1 sequence from a Fibonacci LFSR.

    ``taps`` are the exponents of the feedback polynomial (degree included);
    bit 0 maps to +1 and bit 1 to -1. A non-primitive polynomial is detected
    by the register state recurring before ``2**degree - 1`` steps.
    """
    if degree < 2:
        raise ConfigError("m-sequence degree must be >= 2")
    if taps is None:
        try:
            taps = DEFAULT_MSEQ_TAPS[degree]
        except KeyError:
            raise ConfigError(f"no default primitive polynomial for degree {degree}") from None
    taps = tuple(int(t) for t in taps)
    if max(taps) != degree or min(taps) < 1:
        raise ConfigError(f"taps {taps} do not describe a degree-{degree} polynomial")
    if seed_state is None:
        seed_state = [1] * degree
    state = [int(b) & 1 for b in seed_state]
    if len(state) != degree or not any(state):
        raise ConfigError("seed_state must be a nonzero bit vector of length degree")

    period = 2**degree - 1
    start = tuple(state)
    out = np.empty(period, dtype=np.int8)
    for n in range(period):
        out[n] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
        if tuple(state) == start and n < period - 1:
            raise ConfigError(f"taps {taps} are not primitive (period {n + 1} < {period})")
    return 1.0 - 2.0 * out


def pilot_sequence(n_pilot: int) -> np.ndarray:
    """M-sequence of length ``n_pilot``; ``n_pilot + 1`` must be a power of two."""
    degree = int(round(np.log2(n_pilot + 1)))
    if 2**degree - 1 != n_pilot:
        raise ConfigError(f"pilot length {n_pilot} is not 2^n - 1")
    return generate_m_sequence(degree)


def make_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)


def interleave(bits: np.ndarray, permutation: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != len(permutation):
        raise ValueError(f"length mismatch: {bits.shape[-1]} values, {len(permutation)}-permutation")
    return bits[..., permutation]


def deinterleave(bits: np.ndarray, permutation: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != len(permutation):
        raise ValueError(f"length mismatch: {bits.shape[-1]} values, {len(permutation)}-permutation")
    out = np.empty_like(bits)
    out[..., permutation] = bits
    return out


def map_symbols(bits: np.ndarray, alphabet: SymbolAlphabet) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    q = alphabet.bits_per_symbol
    if bits.size % q:
        raise ValueError(f"bit count {bits.size} not divisible by {q}")
    groups = bits.reshape(-1, q)
    weights = 1 << np.arange(q - 1, -1, -1)
    label_index = alphabet.labels.astype(np.int64) @ weights
    lookup = np.empty(1 << q, dtype=np.int64)
    lookup[label_index] = np.arange(alphabet.size)
    return alphabet.points[lookup[groups @ weights]]


def hard_demap(symbols: np.ndarray, alphabet: SymbolAlphabet) -> np.ndarray:
    """Nearest-point decision, returned as the flattened bit labels."""
    d = np.abs(np.asarray(symbols)[:, None] - alphabet.points[None, :])
    return alphabet.labels[np.argmin(d, axis=1)].reshape(-1).astype(np.int8)


def assemble_frame(pilot: np.ndarray, data_symbols: np.ndarray, cfg: FrameConfig) -> Frame:
    pilot = np.asarray(pilot)
    data_symbols = np.asarray(data_symbols)
    if pilot.size != cfg.n_pilot:
        raise ValueError(f"expected {cfg.n_pilot} pilot symbols, got {pilot.size}")
    if data_symbols.size != cfg.n_data:
        raise ValueError(f"expected {cfg.n_data} data symbols, got {data_symbols.size}")
    m = cfg.frame_len
    symbols = np.zeros(m, dtype=complex)
    symbols[cfg.pilot_slice] = pilot
    symbols[cfg.data_slice] = data_symbols
    idx = np.arange(m)
    pilot_mask = idx < cfg.n_pilot
    data_mask = (idx >= cfg.n_pilot) & (idx < cfg.n_pilot + cfg.n_data)
    return Frame(symbols, pilot_mask, data_mask, ~(pilot_mask | data_mask))


@dataclass
class CodedLink:
    """Bit bookkeeping between information bits and mapper input.

    ``order`` is ``"encode-interleave"`` (standard BICM: the permutation acts
    on coded bits) or ``"interleave-encode"`` (the permutation acts on the
    information bits before encoding).
    """

    cfg: FrameConfig
    code: object
    permutation: np.ndarray
    alphabet: SymbolAlphabet = field(default_factory=qpsk_gray)
    order: str = "encode-interleave"

    def __post_init__(self):
        if self.order not in ("encode-interleave", "interleave-encode"):
            raise ConfigError(f"unknown bit order {self.order!r}")
        n = self.cfg.n_code_bits if self.order == "encode-interleave" else self.cfg.n_info_bits
        if len(self.permutation) != n:
            raise ConfigError(f"permutation length {len(self.permutation)} != {n}")

    def mapper_bits(self, info_bits: np.ndarray) -> np.ndarray:
        if self.order == "encode-interleave":
            return interleave(self.code.encode(info_bits), self.permutation)
        return self.code.encode(interleave(info_bits, self.permutation))

    def to_decoder(self, llr: np.ndarray) -> np.ndarray:
        if self.order == "encode-interleave":
            return deinterleave(llr, self.permutation)
        return llr

    def from_decoder(self, llr: np.ndarray) -> np.ndarray:
        if self.order == "encode-interleave":
            return interleave(llr, self.permutation)
        return llr

    def info_from_codeword(self, codeword_bits: np.ndarray) -> np.ndarray:
        info = self.code.extract_info(codeword_bits)
        if self.order == "interleave-encode":
            info = deinterleave(info, self.permutation)
        return info
