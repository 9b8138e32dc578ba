"""Trainable transmitter and receiver with power normalization.

Transmitter: Conv1d(kernel=stride=bits_per_block, 128 filters) compressing
the bit stream into one feature vector per block, an LSTM with 400 units
returning the full sequence, and a per-step affine map emitting
``2 * symbol_count / block_count`` reals per step, reshaped to
``(symbol_count, 2)`` and power-normalized. Receiver: LSTM(128), LSTM(64),
a length-preserving Conv1d(kernel=bits_per_block, 64 filters), and a
per-step affine map back to per-bit probabilities. Every trainable layer is
followed by batch normalization over its feature axis.

Code rate is set purely by the affine head widths: the transmitter emits
``tx_step_width`` reals per block and the receiver condenses each received
symbol into ``rx_step_width`` bit estimates, so the rate is
``block_count / symbol_count`` with no change to the recurrent core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import DegenerateInputError

CONV_FILTERS = 128
TX_LSTM_UNITS = 400
RX_LSTM1_UNITS = 128
RX_LSTM2_UNITS = 64
RX_CONV_FILTERS = 64


@dataclass(frozen=True)
class LinkConfig:
    """Frame geometry: block size, block count, and transmitted symbol count.

    ``symbol_count >= block_count``; both per-step widths must come out as
    integers, which restricts the supported code rates (1, 2/3, 1/2, 1/3,
    ... all satisfy this).
    """

    bits_per_block: int
    block_count: int
    symbol_count: int

    def __post_init__(self):
        if self.bits_per_block < 1 or self.block_count < 1 or self.symbol_count < 1:
            raise ValueError(f"all LinkConfig fields must be >= 1, got {self}")
        if self.symbol_count < self.block_count:
            raise ValueError(
                f"symbol_count must be >= block_count (code rate <= 1), got {self}")
        if (2 * self.symbol_count) % self.block_count != 0:
            raise ValueError(
                f"transmitter step width 2*symbol_count/block_count must be an integer, "
                f"got 2*{self.symbol_count}/{self.block_count}")
        if (self.bits_per_block * self.block_count) % self.symbol_count != 0:
            raise ValueError(
                f"receiver step width bits_per_block*block_count/symbol_count must be an "
                f"integer, got {self.bits_per_block}*{self.block_count}/{self.symbol_count}")

    @property
    def code_rate(self) -> float:
        return self.block_count / self.symbol_count

    @property
    def frame_bits(self) -> int:
        return self.bits_per_block * self.block_count

    @property
    def tx_step_width(self) -> int:
        """Real outputs per transmitter step (2 * symbol_count / block_count)."""
        return 2 * self.symbol_count // self.block_count

    @property
    def rx_step_width(self) -> int:
        """Bit estimates per received symbol (bits_per_block * code rate)."""
        return self.bits_per_block * self.block_count // self.symbol_count

    def digest(self) -> str:
        return f"s{self.bits_per_block}-m{self.block_count}-n{self.symbol_count}"

    def to_dict(self) -> dict:
        return {"bits_per_block": self.bits_per_block, "block_count": self.block_count,
                "symbol_count": self.symbol_count}

    @classmethod
    def from_dict(cls, d: dict) -> "LinkConfig":
        allowed = {"bits_per_block", "block_count", "symbol_count"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown link config keys: {sorted(unknown)}")
        missing = allowed - set(d)
        if missing:
            raise ValueError(f"missing link config keys: {sorted(missing)}")
        return cls(int(d["bits_per_block"]), int(d["block_count"]), int(d["symbol_count"]))


def normalize_power(raw: torch.Tensor) -> torch.Tensor:
    """Scale each frame so its mean symbol power (I^2 + Q^2) is exactly 1.

    ``raw`` is ``(..., n, 2)``; the scale is computed per frame over all n
    symbols. Scale-invariant: c * raw normalizes to the same output for any
    c > 0. An all-zero frame has no meaningful scale and raises.
    """
    if raw.shape[-1] != 2:
        raise ValueError(f"expected trailing (I, Q) axis, got shape {tuple(raw.shape)}")
    mean_power = (raw * raw).sum(dim=(-1, -2), keepdim=True) / raw.shape[-2]
    if not bool((mean_power > 0).all()):
        raise DegenerateInputError("cannot normalize an all-zero symbol frame")
    return raw / torch.sqrt(mean_power)


class _FeatureNorm(nn.BatchNorm1d):
    """Batch norm over the feature axis of (batch, steps, features) input."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return super().forward(x.transpose(1, 2)).transpose(1, 2)


class Transmitter(nn.Module):
    def __init__(self, config: LinkConfig):
        super().__init__()
        self.config = config
        s = config.bits_per_block
        self.conv = nn.Conv1d(1, CONV_FILTERS, kernel_size=s, stride=s)
        self.conv_norm = nn.BatchNorm1d(CONV_FILTERS)
        self.lstm = nn.LSTM(CONV_FILTERS, TX_LSTM_UNITS, batch_first=True)
        self.lstm_norm = _FeatureNorm(TX_LSTM_UNITS)
        self.head = nn.Linear(TX_LSTM_UNITS, config.tx_step_width)
        self.head_norm = _FeatureNorm(config.tx_step_width)

    def forward(self, bits: torch.Tensor) -> torch.Tensor:
        """(batch, frame_bits) float bits -> (batch, symbol_count, 2) symbols."""
        cfg = self.config
        if bits.dim() != 2 or bits.shape[1] != cfg.frame_bits:
            raise ValueError(
                f"expected (batch, {cfg.frame_bits}) input, got {tuple(bits.shape)}")
        x = self.conv_norm(torch.relu(self.conv(bits.unsqueeze(1))))
        x, _ = self.lstm(x.transpose(1, 2))
        x = self.lstm_norm(x)
        x = self.head_norm(self.head(x))
        symbols = x.reshape(bits.shape[0], cfg.symbol_count, 2)
        return normalize_power(symbols)


class Receiver(nn.Module):
    def __init__(self, config: LinkConfig):
        super().__init__()
        self.config = config
        s = config.bits_per_block
        self.lstm1 = nn.LSTM(2, RX_LSTM1_UNITS, batch_first=True)
        self.norm1 = _FeatureNorm(RX_LSTM1_UNITS)
        self.lstm2 = nn.LSTM(RX_LSTM1_UNITS, RX_LSTM2_UNITS, batch_first=True)
        self.norm2 = _FeatureNorm(RX_LSTM2_UNITS)
        # length-preserving conv: pad kernel-1 total, split left/right
        self.pad = nn.ConstantPad1d(((s - 1) // 2, s // 2), 0.0)
        self.conv = nn.Conv1d(RX_LSTM2_UNITS, RX_CONV_FILTERS, kernel_size=s, stride=1)
        self.conv_norm = nn.BatchNorm1d(RX_CONV_FILTERS)
        self.head = nn.Linear(RX_CONV_FILTERS, config.rx_step_width)
        self.head_norm = _FeatureNorm(config.rx_step_width)

    def forward(self, symbols: torch.Tensor) -> torch.Tensor:
        """(batch, symbol_count, 2) -> (batch, frame_bits) pre-sigmoid logits."""
        cfg = self.config
        if symbols.dim() != 3 or symbols.shape[1:] != (cfg.symbol_count, 2):
            raise ValueError(
                f"expected (batch, {cfg.symbol_count}, 2) input, got {tuple(symbols.shape)}")
        x, _ = self.lstm1(symbols)
        x = self.norm1(x)
        x, _ = self.lstm2(x)
        x = self.norm2(x)
        x = self.conv_norm(torch.relu(self.conv(self.pad(x.transpose(1, 2)))))
        x = self.head_norm(self.head(x.transpose(1, 2)))
        return x.reshape(symbols.shape[0], cfg.frame_bits)


def build_transmitter(config: LinkConfig, init_seed: int) -> Transmitter:
    """Construct a transmitter with deterministic weight initialization."""
    torch.manual_seed(init_seed)
    return Transmitter(config)


def build_receiver(config: LinkConfig, init_seed: int) -> Receiver:
    """Construct a receiver with deterministic weight initialization."""
    torch.manual_seed(init_seed)
    return Receiver(config)


def bits_to_tensor(frame, dtype=torch.float32) -> torch.Tensor:
    """Integer {0,1} frame(s) -> float tensor, adding a batch axis if absent."""
    if isinstance(frame, torch.Tensor):
        t = frame.to(dtype)
    else:
        t = torch.as_tensor(np.asarray(frame), dtype=dtype)
    if t.dim() == 1:
        t = t.unsqueeze(0)
    return t


def transmit(tx: Transmitter, frame) -> torch.Tensor:
    """Map bit frame(s) to normalized symbol frame(s) in inference mode.

    Accepts a single ``(frame_bits,)`` frame or a ``(batch, frame_bits)``
    stack; the output matches (``(symbol_count, 2)`` or
    ``(batch, symbol_count, 2)``). Gradients flow through to the
    transmitter parameters when the input participates in autograd.
    """
    if isinstance(frame, torch.Tensor):
        single = frame.dim() == 1
    else:
        single = np.asarray(frame).ndim == 1
    bits = bits_to_tensor(frame, dtype=next(tx.parameters()).dtype)
    tx.eval()
    out = tx(bits)
    return out[0] if single else out


def receive(rx: Receiver, symbols: torch.Tensor) -> torch.Tensor:
    """Map received symbol frame(s) to per-bit probabilities in [0, 1]."""
    single = symbols.dim() == 2
    if single:
        symbols = symbols.unsqueeze(0)
    rx.eval()
    probs = torch.sigmoid(rx(symbols))
    return probs[0] if single else probs


def hard_decision(probabilities) -> np.ndarray:
    """Per-bit threshold: 1 iff probability > 0.5, ties resolve to 0."""
    if isinstance(probabilities, torch.Tensor):
        probabilities = probabilities.detach().cpu().numpy()
    return (np.asarray(probabilities) > 0.5).astype(np.uint8)
