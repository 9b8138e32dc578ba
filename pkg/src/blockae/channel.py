"""Differentiable channel layers: AWGN and tapped-delay-line multipath.

Symbols travel as real tensors of shape ``(..., n, 2)`` holding (I, Q)
pairs. Noise is drawn fresh on every call and treated as a constant during
backpropagation, so gradients flow through the signal path only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

AWGN = "awgn"
MULTIPATH = "multipath"


@dataclass(frozen=True)
class ChannelProfile:
    """Static channel description: kind plus complex tap gains at integer
    symbol delays. Taps are deterministic constants, not per-frame draws."""

    kind: str = AWGN
    taps: tuple[tuple[int, complex], ...] = ((0, 1 + 0j),)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (AWGN, MULTIPATH):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if len(self.taps) == 0:
            raise ValueError("profile needs at least one tap")
        delays = [d for d, _ in self.taps]
        if delays[0] != 0:
            raise ValueError(f"first tap delay must be 0, got {delays[0]}")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError(f"tap delays must be strictly increasing, got {delays}")

    @property
    def tap_power(self) -> float:
        return float(sum(abs(g) ** 2 for _, g in self.taps))

    def label(self) -> str:
        if self.kind == AWGN:
            return AWGN
        taps = ",".join(f"{d}:{g.real:+.3f}{g.imag:+.3f}j" for d, g in self.taps)
        return f"multipath[{taps}]"


def awgn_profile() -> ChannelProfile:
    return ChannelProfile(kind=AWGN)


def channel_a() -> ChannelProfile:
    """Two paths, strong direct one. Stand-in gains; override via config."""
    return ChannelProfile(kind=MULTIPATH,
                          taps=((0, complex(math.sqrt(0.8))), (1, complex(math.sqrt(0.2)))))


def channel_b() -> ChannelProfile:
    """Three paths with a weak direct one. Stand-in gains; override via config."""
    return ChannelProfile(kind=MULTIPATH,
                          taps=((0, complex(math.sqrt(0.2))),
                                (1, complex(math.sqrt(0.6))),
                                (2, complex(math.sqrt(0.2)))))


NAMED_PROFILES = {"awgn": awgn_profile, "fading-a": channel_a, "fading-b": channel_b}


def profile_from_config(cfg: dict) -> ChannelProfile:
    """Build a profile from the config schema
    ``{kind, taps: [{delay, re, im}], normalize: bool, seed}``."""
    allowed = {"kind", "taps", "normalize", "seed"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown channel config keys: {sorted(unknown)}")
    kind = cfg.get("kind", AWGN)
    seed = int(cfg.get("seed", 0))
    if kind == AWGN:
        if "taps" in cfg:
            raise ValueError("awgn profile takes no taps")
        return ChannelProfile(kind=AWGN, seed=seed)
    raw = cfg.get("taps")
    if not raw:
        raise ValueError("multipath profile requires a non-empty taps list")
    taps = [(int(t["delay"]), complex(float(t["re"]), float(t.get("im", 0.0)))) for t in raw]
    if cfg.get("normalize", False):
        scale = math.sqrt(sum(abs(g) ** 2 for _, g in taps))
        if scale == 0:
            raise ValueError("cannot normalize all-zero taps")
        taps = [(d, g / scale) for d, g in taps]
    return ChannelProfile(kind=MULTIPATH, taps=tuple(taps), seed=seed)


def profile_to_config(profile: ChannelProfile) -> dict:
    if profile.kind == AWGN:
        return {"kind": AWGN, "seed": profile.seed}
    return {
        "kind": MULTIPATH,
        "taps": [{"delay": d, "re": g.real, "im": g.imag} for d, g in profile.taps],
        "normalize": False,
        "seed": profile.seed,
    }


def noise_variance(eb_n0_db: float, bits_per_block: int, code_rate: float) -> float:
    """Per-real-dimension noise variance for unit average symbol energy.

    Each complex symbol carries ``bits_per_block * code_rate`` information
    bits, so sigma^2 = 1 / (2 * S * r * 10^(Eb/N0 / 10)) per dimension.
    """
    if bits_per_block < 1:
        raise ValueError(f"bits_per_block must be >= 1, got {bits_per_block}")
    if not 0 < code_rate <= 1:
        raise ValueError(f"code_rate must be in (0, 1], got {code_rate}")
    return 1.0 / (2.0 * bits_per_block * code_rate * 10.0 ** (eb_n0_db / 10.0))


@dataclass(frozen=True)
class NoiseSpec:
    """Eb/N0 operating point with its precomputed per-dimension variance.

    ``sigma2_per_dim == 0`` is allowed as an explicit noiseless test mode.
    """

    eb_n0_db: float
    sigma2_per_dim: float

    def __post_init__(self):
        if self.sigma2_per_dim < 0:
            raise ValueError(f"sigma2_per_dim must be >= 0, got {self.sigma2_per_dim}")

    @classmethod
    def for_link(cls, eb_n0_db: float, bits_per_block: int, code_rate: float) -> "NoiseSpec":
        return cls(eb_n0_db, noise_variance(eb_n0_db, bits_per_block, code_rate))

    @classmethod
    def noiseless(cls) -> "NoiseSpec":
        return cls(math.inf, 0.0)


def apply_awgn(symbols: torch.Tensor, spec: NoiseSpec,
               generator: torch.Generator | None = None) -> torch.Tensor:
    """Add independent zero-mean Gaussian noise per real dimension."""
    if spec.sigma2_per_dim == 0.0:
        return symbols
    noise = torch.randn(symbols.shape, generator=generator, dtype=symbols.dtype,
                        device=symbols.device)
    return symbols + math.sqrt(spec.sigma2_per_dim) * noise


def apply_multipath(symbols: torch.Tensor, profile: ChannelProfile, spec: NoiseSpec,
                    generator: torch.Generator | None = None) -> torch.Tensor:
    """Convolve with the tap gains, truncate to the input length, add AWGN.

    The convolution tail is dropped: no guard interval exists, so the frame
    keeps its symbol count. Output symbol n is sum over taps of
    gain_k * input[n - delay_k].
    """
    if profile.kind != MULTIPATH:
        raise ValueError(f"profile kind must be {MULTIPATH!r}, got {profile.kind!r}")
    if symbols.shape[-1] != 2:
        raise ValueError(f"symbols must have a trailing (I, Q) axis, got {symbols.shape}")
    n = symbols.shape[-2]
    i, q = symbols[..., 0], symbols[..., 1]
    out_i = torch.zeros_like(i)
    out_q = torch.zeros_like(q)
    for delay, gain in profile.taps:
        if delay >= n:
            continue
        src_i = i[..., : n - delay]
        src_q = q[..., : n - delay]
        out_i[..., delay:] = out_i[..., delay:] + gain.real * src_i - gain.imag * src_q
        out_q[..., delay:] = out_q[..., delay:] + gain.real * src_q + gain.imag * src_i
    return apply_awgn(torch.stack((out_i, out_q), dim=-1), spec, generator)


def apply_channel(symbols: torch.Tensor, profile: ChannelProfile, spec: NoiseSpec,
                  generator: torch.Generator | None = None) -> torch.Tensor:
    if profile.kind == AWGN:
        return apply_awgn(symbols, spec, generator)
    return apply_multipath(symbols, profile, spec, generator)


def iq_to_complex(symbols: torch.Tensor) -> np.ndarray:
    """(..., n, 2) real tensor -> (..., n) complex numpy array."""
    arr = symbols.detach().cpu().numpy()
    return arr[..., 0] + 1j * arr[..., 1]


def complex_to_iq(symbols: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(..., n) complex numpy array -> (..., n, 2) real tensor."""
    stacked = np.stack((symbols.real, symbols.imag), axis=-1)
    return torch.from_numpy(np.ascontiguousarray(stacked)).to(dtype)
