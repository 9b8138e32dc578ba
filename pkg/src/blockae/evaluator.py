"""Monte-Carlo BER sweeps, constellation extraction, and CSV/plot export.

Sweeps stream freshly generated frames by default so BER well below the
reach of any fixed test set can still be estimated; a fixed dataset can be
supplied instead for a test-set-faithful measurement. Every grid point owns
an rng stream derived from (seed, point index), so curves are reproducible
and points could be farmed out to workers without changing results.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import baseline as bl
from . import channel as ch
from . import framing
from .errors import DegenerateConstellationError
from .model import LinkConfig, Receiver, Transmitter, hard_decision

BER_CSV_HEADER = ["system", "channel", "S", "M", "Mprime", "eb_n0_db",
                  "bit_errors", "bits_simulated", "ber"]
CLOUD_CSV_HEADER = ["frame_index", "symbol_index", "i", "q"]

DEFAULT_MIN_ERRORS = 100
DEFAULT_MAX_BITS = 10_000_000


def bit_error_rate(reference, decoded) -> tuple[int, int]:
    """Hamming distance and total length of two equal-length bit arrays."""
    reference = np.asarray(reference, dtype=np.uint8)
    decoded = np.asarray(decoded, dtype=np.uint8)
    if reference.shape != decoded.shape:
        raise ValueError(
            f"length mismatch: reference {reference.shape} vs decoded {decoded.shape}")
    return int(np.count_nonzero(reference != decoded)), int(reference.size)


def run_frames(tx: Transmitter, rx: Receiver, bits: np.ndarray,
               profile: ch.ChannelProfile, spec: ch.NoiseSpec,
               generator: torch.Generator | None = None) -> np.ndarray:
    """Push bit frames through transmit -> channel -> receive -> hard decision.

    Inference mode, no gradients. ``bits`` is (batch, frame_bits) uint8; the
    decoded array has the same shape. Shared between the trainer's validation
    pass and the sweep engine so their BER figures agree exactly.
    """
    tx.eval()
    rx.eval()
    with torch.no_grad():
        frames = torch.as_tensor(bits, dtype=next(tx.parameters()).dtype)
        symbols = tx(frames)
        distorted = ch.apply_channel(symbols, profile, spec, generator)
        probabilities = torch.sigmoid(rx(distorted))
    return hard_decision(probabilities)


@dataclass(frozen=True)
class BerPoint:
    eb_n0_db: float
    bit_errors: int
    bits_simulated: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_simulated


@dataclass(frozen=True)
class BerCurve:
    system: str
    channel: str
    link: LinkConfig
    points: tuple[BerPoint, ...]

    def bers(self) -> list[float]:
        return [p.ber for p in self.points]

    def point_at(self, eb_n0_db: float) -> BerPoint:
        for p in self.points:
            if p.eb_n0_db == eb_n0_db:
                return p
        raise KeyError(f"no point at {eb_n0_db} dB")


class AutoencoderSystem:
    """Trained transmitter/receiver pair exposed to the sweep engine."""

    def __init__(self, tx: Transmitter, rx: Receiver, label: str = "autoencoder"):
        if tx.config != rx.config:
            raise ValueError(f"mismatched link configs: {tx.config} vs {rx.config}")
        self.tx = tx
        self.rx = rx
        self.label = label

    @property
    def link(self) -> LinkConfig:
        return self.tx.config

    @property
    def code_rate(self) -> float:
        return self.link.code_rate

    def decode(self, bits: np.ndarray, profile, spec, generator) -> np.ndarray:
        return run_frames(self.tx, self.rx, bits, profile, spec, generator)

    def transmit_frames(self, bits: np.ndarray) -> np.ndarray:
        """Channel-free transmit; returns all symbols as an (n, 2) array."""
        self.tx.eval()
        with torch.no_grad():
            symbols = self.tx(torch.as_tensor(bits, dtype=next(self.tx.parameters()).dtype))
        return symbols.reshape(-1, 2).numpy()


class BaselineSystem:
    """Classical 64-QAM chain (optionally convolutionally coded) for sweeps."""

    KINDS = {"qam64": 1.0, "qam64-viterbi-r12": 0.5}

    def __init__(self, kind: str, link: LinkConfig):
        if kind not in self.KINDS:
            raise ValueError(f"unknown baseline kind {kind!r}; pick from {sorted(self.KINDS)}")
        if link.bits_per_block != bl.QAM64_BITS_PER_SYMBOL:
            raise ValueError(
                f"64-QAM baselines need bits_per_block = 6, got {link.bits_per_block}")
        self.kind = kind
        self.label = kind
        self.link = link
        self.code_rate = self.KINDS[kind]
        # probe one frame so impossible geometries fail before a long sweep
        bl.baseline_chain(np.zeros(link.frame_bits, dtype=np.uint8), self.code_rate,
                          ch.awgn_profile(), ch.NoiseSpec.noiseless())

    def decode(self, bits: np.ndarray, profile, spec, generator) -> np.ndarray:
        return bl.baseline_chain(bits, self.code_rate, profile, spec, generator)


def _point_streams(seed: int, index: int):
    """Independent (frame rng, torch noise generator) pair per grid point."""
    root = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    frame_ss, noise_ss = root.spawn(2)
    noise_seed = int(noise_ss.generate_state(1, np.uint64)[0] >> 1)
    return np.random.default_rng(frame_ss), torch.Generator().manual_seed(noise_seed)


def sweep(system, profile: ch.ChannelProfile, grid_db, *,
          min_errors: int = DEFAULT_MIN_ERRORS, max_bits: int = DEFAULT_MAX_BITS,
          seed: int = 0, frames_per_chunk: int | None = None,
          dataset: framing.Dataset | None = None) -> BerCurve:
    """Estimate BER at each Eb/N0 grid point until enough errors accumulate.

    Each point streams fresh frames until ``min_errors`` bit errors are seen
    or the next frame would push past ``max_bits`` simulated bits. With
    ``dataset`` given, every point instead runs exactly one pass over the
    fixed frames. Deterministic given ``seed``.
    """
    grid = [float(g) for g in grid_db]
    if not grid:
        raise ValueError("grid must be non-empty")
    if min_errors < 1:
        raise ValueError(f"min_errors must be >= 1, got {min_errors}")
    link = system.link
    if dataset is not None and (dataset.bits_per_block != link.bits_per_block
                                or dataset.block_count != link.block_count):
        raise ValueError(
            f"dataset geometry ({dataset.bits_per_block}, {dataset.block_count}) does not "
            f"match link ({link.bits_per_block}, {link.block_count})")
    frame_bits = link.frame_bits
    if frames_per_chunk is None:
        frames_per_chunk = max(1, min(1024, -(-200_000 // frame_bits)))

    points = []
    for index, eb_n0_db in enumerate(sorted(grid)):
        spec = ch.NoiseSpec.for_link(eb_n0_db, link.bits_per_block, system.code_rate)
        frame_rng, noise_gen = _point_streams(seed, index)
        errors = 0
        total = 0
        if dataset is not None:
            for start in range(0, len(dataset), frames_per_chunk):
                chunk = dataset.frames[start:start + frames_per_chunk]
                decoded = system.decode(chunk, profile, spec, noise_gen)
                e, n = bit_error_rate(chunk, decoded)
                errors += e
                total += n
        else:
            while errors < min_errors and total + frame_bits <= max_bits:
                budget = (max_bits - total) // frame_bits
                count = min(frames_per_chunk, budget)
                chunk = frame_rng.integers(0, 2, size=(count, frame_bits), dtype=np.uint8)
                decoded = system.decode(chunk, profile, spec, noise_gen)
                e, n = bit_error_rate(chunk, decoded)
                errors += e
                total += n
        points.append(BerPoint(eb_n0_db=eb_n0_db, bit_errors=errors, bits_simulated=total))
    return BerCurve(system=system.label, channel=profile.label(), link=link,
                    points=tuple(points))


@dataclass(frozen=True)
class ConstellationCloud:
    """Transmitter output points plus a 64-center clustering summary."""

    points: np.ndarray                 # (n, 2) I/Q
    frame_count: int
    symbols_per_frame: int
    centroids: np.ndarray              # (64, 2)
    populations: np.ndarray            # (64,)
    radii: np.ndarray                  # (64,) max member distance
    capture_fraction: float            # within 3x median radius of own centroid

    @property
    def cluster_count(self) -> int:
        return int(np.count_nonzero(self.populations))

    @property
    def mean_power(self) -> float:
        return float((self.points ** 2).sum(axis=1).mean())

    def report(self) -> dict:
        return {
            "cluster_count": self.cluster_count,
            "capture_fraction": self.capture_fraction,
            "mean_power": self.mean_power,
            "median_radius": float(np.median(self.radii)),
            "centroids": self.centroids.tolist(),
            "populations": self.populations.tolist(),
            "radii": self.radii.tolist(),
        }


N_CLUSTERS = 64
_KMEANS_RESTARTS = 50


def extract_constellation(system, n_frames: int, seed: int) -> ConstellationCloud:
    """Transmit random frames with no channel and cluster the symbol cloud.

    Runs 64-center k-means with 50 restarts scored by inertia. Raises
    :class:`DegenerateConstellationError` when the transmitter output has
    collapsed to a single point.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    link = system.link
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n_frames, link.frame_bits), dtype=np.uint8)
    points = np.asarray(system.transmit_frames(bits), dtype=np.float64)
    spread = points.max(axis=0) - points.min(axis=0)
    if float(spread.max(initial=0.0)) < 1e-6:
        raise DegenerateConstellationError(
            f"transmitter emitted a collapsed cloud (spread {spread.max(initial=0.0):.2e})")

    from sklearn.cluster import KMeans

    km = KMeans(n_clusters=N_CLUSTERS, n_init=_KMEANS_RESTARTS, random_state=seed % (2**32))
    assignment = km.fit_predict(points)
    centroids = km.cluster_centers_
    distances = np.linalg.norm(points - centroids[assignment], axis=1)
    populations = np.bincount(assignment, minlength=N_CLUSTERS)
    radii = np.zeros(N_CLUSTERS)
    np.maximum.at(radii, assignment, distances)
    median_radius = float(np.median(radii))
    captured = float(np.mean(distances <= 3.0 * median_radius)) if median_radius > 0 else 1.0
    return ConstellationCloud(points=points, frame_count=n_frames,
                              symbols_per_frame=link.symbol_count, centroids=centroids,
                              populations=populations, radii=radii,
                              capture_fraction=captured)


def export_curve(curve: BerCurve, path) -> None:
    """Write one CSV row per grid point (repr-formatted floats round-trip)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BER_CSV_HEADER)
        for p in curve.points:
            writer.writerow([curve.system, curve.channel, curve.link.bits_per_block,
                             curve.link.block_count, curve.link.symbol_count,
                             repr(p.eb_n0_db), p.bit_errors, p.bits_simulated, repr(p.ber)])


def load_curve(path) -> BerCurve:
    """Read a CSV written by :func:`export_curve`."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != BER_CSV_HEADER:
        raise ValueError(f"{path}: not a BER curve CSV (bad header)")
    if len(rows) < 2:
        raise ValueError(f"{path}: curve has no data rows")
    first = rows[1]
    link = LinkConfig(int(first[2]), int(first[3]), int(first[4]))
    points = tuple(BerPoint(eb_n0_db=float(r[5]), bit_errors=int(r[6]),
                            bits_simulated=int(r[7])) for r in rows[1:])
    return BerCurve(system=first[0], channel=first[1], link=link, points=points)


def export_cloud(cloud: ConstellationCloud, path) -> None:
    """Write every transmitted symbol as a (frame, symbol, i, q) CSV row."""
    path = Path(path)
    n = cloud.symbols_per_frame
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLOUD_CSV_HEADER)
        for idx, (i, q) in enumerate(cloud.points):
            writer.writerow([idx // n, idx % n, repr(float(i)), repr(float(q))])


def export_cluster_report(cloud: ConstellationCloud, path) -> None:
    Path(path).write_text(json.dumps(cloud.report(), indent=2))


def plot_curves(curves: list[BerCurve], path, title: str = "BER vs Eb/N0") -> None:
    """Render one or more curves on a log-scale BER axis."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for curve in curves:
        xs = [p.eb_n0_db for p in curve.points]
        ys = [max(p.ber, 1e-12) for p in curve.points]
        ax.semilogy(xs, ys, marker="o", label=f"{curve.system} ({curve.channel})")
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BER")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cloud(cloud: ConstellationCloud, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(cloud.points[:, 0], cloud.points[:, 1], s=2, alpha=0.3)
    ax.scatter(cloud.centroids[:, 0], cloud.centroids[:, 1], s=30, marker="x", color="red")
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    ax.set_aspect("equal")
    ax.set_title(f"{cloud.cluster_count} clusters, capture {cloud.capture_fraction:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
