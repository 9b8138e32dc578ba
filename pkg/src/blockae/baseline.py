"""Classical comparison chain: Gray-mapped 64-QAM, a constraint-length-7
convolutional code with hard-decision Viterbi decoding, and the analytic
64-QAM BER formula used as a Monte-Carlo oracle.

The per-axis Gray table is binary reflected: labels 000, 001, 011, 010,
110, 111, 101, 100 map to levels -7, -5, -3, -1, +1, +3, +5, +7 (before the
1/sqrt(42) unit-power scaling). A 6-bit block maps its first 3 bits to the
I level and its last 3 to the Q level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import channel as ch

QAM64_BITS_PER_SYMBOL = 6
_SCALE = 1.0 / math.sqrt(42.0)
# level index i (ascending -7..+7) carries gray(i) = i ^ (i >> 1) as its 3-bit label
_LEVELS = np.arange(-7, 8, 2, dtype=np.float64) * _SCALE
_GRAY = np.arange(8) ^ (np.arange(8) >> 1)
_LABEL_TO_INDEX = np.argsort(_GRAY)  # label -> level index
_BIT_WEIGHTS = np.array([4, 2, 1], dtype=np.int64)


def qam64_modulate(bits) -> np.ndarray:
    """Map bits (length divisible by 6) to unit-average-power 64-QAM symbols."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    if bits.size % QAM64_BITS_PER_SYMBOL != 0:
        raise ValueError(f"bit count must be divisible by 6, got {bits.size}")
    groups = bits.reshape(-1, QAM64_BITS_PER_SYMBOL)
    i_label = groups[:, :3] @ _BIT_WEIGHTS
    q_label = groups[:, 3:] @ _BIT_WEIGHTS
    return _LEVELS[_LABEL_TO_INDEX[i_label]] + 1j * _LEVELS[_LABEL_TO_INDEX[q_label]]


def _slice_axis(values: np.ndarray) -> np.ndarray:
    """Nearest level per axis; exact midpoint ties pick the lower-magnitude level."""
    d = np.abs(values[..., None] - _LEVELS)
    m = d.min(axis=-1, keepdims=True)
    tied = np.isclose(d, m, rtol=0.0, atol=1e-12)
    return np.where(tied, np.abs(_LEVELS), np.inf).argmin(axis=-1)


def qam64_demodulate(symbols) -> np.ndarray:
    """Minimum-distance hard decision back to bits (per-axis slicing)."""
    symbols = np.asarray(symbols).reshape(-1)
    i_idx = _slice_axis(symbols.real)
    q_idx = _slice_axis(symbols.imag)
    out = np.empty((symbols.size, QAM64_BITS_PER_SYMBOL), dtype=np.uint8)
    for col, weight in enumerate(_BIT_WEIGHTS):
        out[:, col] = (_GRAY[i_idx] // weight) % 2
        out[:, 3 + col] = (_GRAY[q_idx] // weight) % 2
    return out.reshape(-1)


def qam64_constellation() -> np.ndarray:
    """All 64 points in label order (label = 6-bit integer, I bits high)."""
    labels = np.arange(64)
    bits = ((labels[:, None] >> np.arange(5, -1, -1)) & 1).reshape(-1)
    return qam64_modulate(bits)


@dataclass(frozen=True)
class ConvCode:
    """Feedforward convolutional code with zero-tail termination.

    ``generators`` are octal-style integers whose most significant bit taps
    the current input bit. ``puncture`` is an optional per-input-step keep
    pattern, one (keep_g1, keep_g2) pair per step, cycled.
    """

    constraint_length: int = 7
    generators: tuple[int, int] = (0o133, 0o171)
    puncture: tuple[tuple[int, int], ...] | None = None

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def rate(self) -> float:
        if self.puncture is None:
            return 0.5
        kept = sum(a + b for a, b in self.puncture)
        return len(self.puncture) / kept


CODE_R12 = ConvCode()
CODE_R23 = ConvCode(puncture=((1, 1), (1, 0)))


def _keep_mask(code: ConvCode, steps: int) -> np.ndarray:
    """(steps, 2) 0/1 mask of transmitted coded bits after puncturing."""
    if code.puncture is None:
        return np.ones((steps, 2), dtype=np.uint8)
    pattern = np.array(code.puncture, dtype=np.uint8)
    reps = -(-steps // len(pattern))
    return np.tile(pattern, (reps, 1))[:steps]


def conv_encode(bits, code: ConvCode = CODE_R12) -> np.ndarray:
    """Encode with zero-tail termination. Accepts (L,) or (batch, L) bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    single = bits.ndim == 1
    if single:
        bits = bits[None, :]
    mem = code.memory
    steps = bits.shape[1] + mem
    padded = np.zeros((bits.shape[0], steps), dtype=np.uint8)
    padded[:, : bits.shape[1]] = bits
    coded = np.zeros((bits.shape[0], steps, 2), dtype=np.uint8)
    for out_idx, gen in enumerate(code.generators):
        for j in range(code.constraint_length):
            if (gen >> (code.constraint_length - 1 - j)) & 1:
                coded[:, j:, out_idx] ^= padded[:, : steps - j]
    keep = _keep_mask(code, steps).reshape(-1).astype(bool)
    flat = coded.reshape(bits.shape[0], 2 * steps)[:, keep]
    return flat[0] if single else flat


def _popcount_parity(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    v = values.copy()
    while v.any():
        out ^= v & 1
        v >>= 1
    return out


def viterbi_decode(coded_bits, code: ConvCode = CODE_R12,
                   message_bits: int | None = None) -> np.ndarray:
    """Maximum-likelihood sequence decode over the Hamming metric.

    Expects hard bits from a zero-tail-terminated encoder; traceback starts
    from the zero state. Accepts a single coded vector or a (batch, n)
    stack of equal-length codewords. Punctured positions contribute no
    branch cost; ``message_bits`` must be given for punctured codes.
    """
    coded = np.asarray(coded_bits, dtype=np.uint8)
    single = coded.ndim == 1
    if single:
        coded = coded[None, :]
    mem = code.memory

    if code.puncture is None:
        if coded.shape[1] % 2 != 0:
            raise ValueError(f"coded length must be even, got {coded.shape[1]}")
        steps = coded.shape[1] // 2
        if message_bits is None:
            message_bits = steps - mem
        if message_bits < 1 or message_bits + mem != steps:
            raise ValueError(
                f"coded length {coded.shape[1]} does not match a tail-terminated "
                f"message of {message_bits} bits")
        observed = coded.reshape(-1, steps, 2)
        mask = np.ones((steps, 2), dtype=np.uint8)
    else:
        if message_bits is None:
            raise ValueError("punctured codes need an explicit message_bits")
        steps = message_bits + mem
        mask = _keep_mask(code, steps)
        if int(mask.sum()) != coded.shape[1]:
            raise ValueError(
                f"coded length {coded.shape[1]} does not match {message_bits} message "
                f"bits under the puncture pattern (expected {int(mask.sum())})")
        observed = np.zeros((coded.shape[0], steps, 2), dtype=np.uint8)
        observed.reshape(coded.shape[0], -1)[:, mask.reshape(-1).astype(bool)] = coded

    n_states = 1 << mem
    dest = np.arange(n_states)
    input_bit = dest >> (mem - 1)
    # two predecessors per destination state, and the branch outputs they emit
    pred = np.stack(((dest << 1) & (n_states - 1), ((dest << 1) | 1) & (n_states - 1)))
    window = (input_bit[None, :] << mem) | pred
    out1 = _popcount_parity(window & code.generators[0]).astype(np.int64)
    out2 = _popcount_parity(window & code.generators[1]).astype(np.int64)

    batch = observed.shape[0]
    metric = np.full((batch, n_states), 1 << 40, dtype=np.int64)
    metric[:, 0] = 0
    choice = np.empty((steps, batch, n_states), dtype=np.uint8)
    for t in range(steps):
        o1 = observed[:, t, 0, None].astype(np.int64)
        o2 = observed[:, t, 1, None].astype(np.int64)
        m1, m2 = int(mask[t, 0]), int(mask[t, 1])
        cost0 = metric[:, pred[0]] + m1 * (out1[0] ^ o1) + m2 * (out2[0] ^ o2)
        cost1 = metric[:, pred[1]] + m1 * (out1[1] ^ o1) + m2 * (out2[1] ^ o2)
        take1 = cost1 < cost0
        metric = np.where(take1, cost1, cost0)
        choice[t] = take1

    decoded = np.empty((batch, steps), dtype=np.uint8)
    state = np.zeros(batch, dtype=np.int64)
    rows = np.arange(batch)
    for t in range(steps - 1, -1, -1):
        decoded[:, t] = state >> (mem - 1)
        state = ((state << 1) | choice[t, rows, state]) & (n_states - 1)
    decoded = decoded[:, :message_bits]
    return decoded[0] if single else decoded


def analytic_qam64_ber(eb_n0_db: float) -> float:
    """Gray 64-QAM bit error probability over AWGN (standard approximation).

    Pb = (4/6) * (1 - 1/8) * Q(sqrt(18/63 * 10^(Eb/N0 / 10))).
    """
    gamma = 10.0 ** (eb_n0_db / 10.0)
    k = QAM64_BITS_PER_SYMBOL
    m = 2 ** k
    arg = math.sqrt(3.0 * k / (m - 1) * gamma)
    q = 0.5 * math.erfc(arg / math.sqrt(2.0))
    return (4.0 / k) * (1.0 - 1.0 / math.sqrt(m)) * q


def baseline_chain(bits, code_rate: float, profile: ch.ChannelProfile, spec: ch.NoiseSpec,
                   generator: torch.Generator | None = None) -> np.ndarray:
    """End-to-end classical chain returning decoded bits aligned with input.

    ``code_rate`` 1 runs uncoded 64-QAM; 1/2 inserts the convolutional
    encoder and hard-decision Viterbi decoder. Accepts (L,) or (batch, L).
    """
    bits = np.asarray(bits, dtype=np.uint8)
    single = bits.ndim == 1
    if single:
        bits = bits[None, :]
    if code_rate == 1:
        coded = bits
    elif code_rate == 0.5:
        coded = conv_encode(bits, CODE_R12)
    else:
        raise ValueError(f"baseline chain supports code rates 1 and 1/2, got {code_rate}")
    if coded.shape[1] % QAM64_BITS_PER_SYMBOL != 0:
        raise ValueError(
            f"coded frame length {coded.shape[1]} is not divisible by 6; pick a frame "
            f"size whose coded length maps to whole 64-QAM symbols")
    symbols = qam64_modulate(coded.reshape(-1)).reshape(coded.shape[0], -1)
    received = ch.apply_channel(ch.complex_to_iq(symbols, dtype=torch.float64),
                                profile, spec, generator)
    sliced = qam64_demodulate(ch.iq_to_complex(received).reshape(-1))
    sliced = sliced.reshape(coded.shape)
    if code_rate == 1:
        decoded = sliced
    else:
        decoded = viterbi_decode(sliced, CODE_R12)
    return decoded[0] if single else decoded
