"""End-to-end optimization loop binding transmitter -> channel -> receiver.

Minimizes mean binary cross-entropy between input bits and the receiver's
per-bit probabilities, with the channel held at a fixed training Eb/N0.
Fully seeded: weight init, train/validation split, batch order, and channel
noise each have their own stream, so a rerun on the same machine reproduces
the run bit for bit (across platforms, expect small float drift from BLAS
differences; documented in the README).
"""

from __future__ import annotations

import copy
import io
import json
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import channel as ch
from .errors import IncompatibleCheckpointError, TrainingDivergedError
from .evaluator import bit_error_rate, run_frames
from .framing import Dataset
from .model import LinkConfig, Receiver, Transmitter, build_receiver, build_transmitter

CHECKPOINT_VERSION = 1
HISTORY_CSV_HEADER = ["epoch", "loss", "train_ber", "val_ber", "seconds"]

# offset separating validation-noise draws from training-noise draws
_VAL_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainSeeds:
    init: int = 0
    data: int = 1
    noise: int = 2
    shuffle: int = 3

    @classmethod
    def from_base(cls, base: int) -> "TrainSeeds":
        return cls(init=base, data=base + 1, noise=base + 2, shuffle=base + 3)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam: AdamParams = AdamParams()
    epochs: int = 100
    train_eb_n0_db: float = 12.0
    channel: ch.ChannelProfile = ch.ChannelProfile()
    seeds: TrainSeeds = TrainSeeds()
    early_stop_patience: int | None = 10
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


@dataclass
class TrainingHistory:
    """One record per completed epoch plus the selection outcome."""

    epoch: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    train_ber: list[float] = field(default_factory=list)
    val_ber: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def append(self, epoch, loss, train_ber, val_ber, seconds):
        self.epoch.append(int(epoch))
        self.loss.append(float(loss))
        self.train_ber.append(float(train_ber))
        self.val_ber.append(float(val_ber))
        self.seconds.append(float(seconds))

    def to_csv(self, path) -> None:
        lines = [",".join(HISTORY_CSV_HEADER)]
        for i in range(len(self.epoch)):
            lines.append(f"{self.epoch[i]},{self.loss[i]!r},{self.train_ber[i]!r},"
                         f"{self.val_ber[i]!r},{self.seconds[i]:.3f}")
        Path(path).write_text("\n".join(lines) + "\n")


def validation_noise_seed(noise_seed: int) -> int:
    """Seed of the per-epoch validation noise generator (fixed across epochs)."""
    return noise_seed + _VAL_SEED_OFFSET


def split_train_val(dataset: Dataset, val_fraction: float, data_seed: int):
    """Deterministic shuffle split; at least one frame lands on each side."""
    n = len(dataset)
    n_val = min(max(1, round(n * val_fraction)), n - 1)
    order = np.random.default_rng(data_seed).permutation(n)
    return dataset.frames[order[n_val:]], dataset.frames[order[:n_val]]


def train(link: LinkConfig, tcfg: TrainConfig, dataset: Dataset
          ) -> tuple[Transmitter, Receiver, TrainingHistory]:
    """Run mini-batch gradient descent, returning the best-validation model.

    Raises :class:`TrainingDivergedError` if the loss goes non-finite. The
    returned modules carry the weights of the epoch with the lowest
    validation BER (earliest on ties); batch-norm statistics are frozen at
    that point and the modules are left in eval mode.
    """
    if (dataset.bits_per_block, dataset.block_count) != (link.bits_per_block, link.block_count):
        raise ValueError(
            f"dataset geometry ({dataset.bits_per_block}, {dataset.block_count}) does not "
            f"match link ({link.bits_per_block}, {link.block_count})")
    if len(dataset) < 2:
        raise ValueError("need at least 2 frames to split train/validation")

    train_frames, val_frames = split_train_val(dataset, tcfg.val_fraction, tcfg.seeds.data)
    batch_size = min(tcfg.batch_size, len(train_frames))

    tx = build_transmitter(link, tcfg.seeds.init)
    rx = build_receiver(link, tcfg.seeds.init + 1)
    params = list(tx.parameters()) + list(rx.parameters())
    optimizer = torch.optim.Adam(params, lr=tcfg.learning_rate,
                                 betas=(tcfg.adam.beta1, tcfg.adam.beta2), eps=tcfg.adam.eps)
    loss_fn = torch.nn.BCEWithLogitsLoss()
    spec = ch.NoiseSpec.for_link(tcfg.train_eb_n0_db, link.bits_per_block, link.code_rate)
    noise_gen = torch.Generator().manual_seed(tcfg.seeds.noise)

    history = TrainingHistory()
    best = {"val_ber": float("inf"), "epoch": 0, "tx": None, "rx": None}

    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        tx.train()
        rx.train()
        order = np.random.default_rng([tcfg.seeds.shuffle, epoch]).permutation(len(train_frames))
        epoch_loss = 0.0
        epoch_bits = 0
        epoch_errors = 0
        for start in range(0, len(order), batch_size):
            batch = train_frames[order[start:start + batch_size]]
            bits = torch.as_tensor(batch, dtype=torch.float32)
            optimizer.zero_grad()
            symbols = tx(bits)
            distorted = ch.apply_channel(symbols, tcfg.channel, spec, noise_gen)
            logits = rx(distorted)
            loss = loss_fn(logits, bits)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * batch.shape[0]
            epoch_errors += int((logits.detach() > 0).ne(bits > 0.5).sum())
            epoch_bits += bits.numel()

        val_gen = torch.Generator().manual_seed(validation_noise_seed(tcfg.seeds.noise))
        decoded = run_frames(tx, rx, val_frames, tcfg.channel, spec, val_gen)
        val_errors, val_bits = bit_error_rate(val_frames, decoded)
        val_ber = val_errors / val_bits
        history.append(epoch, epoch_loss / len(train_frames), epoch_errors / epoch_bits,
                       val_ber, time.perf_counter() - t0)

        if val_ber < best["val_ber"]:
            best.update(val_ber=val_ber, epoch=epoch,
                        tx=copy.deepcopy(tx.state_dict()), rx=copy.deepcopy(rx.state_dict()))
        elif tcfg.early_stop_patience is not None \
                and epoch - best["epoch"] >= tcfg.early_stop_patience:
            history.stopped_early = True
            break

    history.best_epoch = best["epoch"]
    tx.load_state_dict(best["tx"])
    rx.load_state_dict(best["rx"])
    tx.eval()
    rx.eval()
    return tx, rx, history


def _state_to_arrays(prefix: str, module: torch.nn.Module) -> dict:
    return {f"{prefix}.{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def save_checkpoint(tx: Transmitter, rx: Receiver, history: TrainingHistory | None,
                    path, seeds: TrainSeeds | None = None) -> None:
    """Write a versioned npz container: link config, all weights and
    batch-norm statistics, optional history, and the training seeds."""
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "link": tx.config.to_dict(),
        "seeds": None if seeds is None else vars(seeds),
        "history": None,
    }
    arrays = {}
    arrays.update(_state_to_arrays("tx", tx))
    arrays.update(_state_to_arrays("rx", rx))
    if history is not None:
        meta["history"] = {"best_epoch": history.best_epoch,
                           "stopped_early": history.stopped_early}
        arrays["history.epoch"] = np.asarray(history.epoch, dtype=np.int64)
        arrays["history.loss"] = np.asarray(history.loss, dtype=np.float64)
        arrays["history.train_ber"] = np.asarray(history.train_ber, dtype=np.float64)
        arrays["history.val_ber"] = np.asarray(history.val_ber, dtype=np.float64)
        arrays["history.seconds"] = np.asarray(history.seconds, dtype=np.float64)
    arrays["meta"] = np.asarray(json.dumps(meta))
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[Transmitter, Receiver, TrainingHistory | None]:
    """Read a checkpoint written by :func:`save_checkpoint` (lossless)."""
    try:
        data = np.load(path, allow_pickle=False)
        with data:
            if "meta" not in data:
                raise IncompatibleCheckpointError(f"{path}: missing checkpoint metadata")
            meta = json.loads(str(data["meta"]))
            version = meta.get("checkpoint_version")
            if version != CHECKPOINT_VERSION:
                raise IncompatibleCheckpointError(
                    f"{path}: checkpoint version {version}, this build reads "
                    f"version {CHECKPOINT_VERSION}")
            link = LinkConfig.from_dict(meta["link"])
            tx = build_transmitter(link, 0)
            rx = build_receiver(link, 0)
            for prefix, module in (("tx", tx), ("rx", rx)):
                state = {}
                for key in module.state_dict():
                    full = f"{prefix}.{key}"
                    if full not in data:
                        raise IncompatibleCheckpointError(f"{path}: missing tensor {full}")
                    state[key] = torch.from_numpy(data[full])
                module.load_state_dict(state)
            history = None
            if meta.get("history") is not None:
                history = TrainingHistory(
                    epoch=data["history.epoch"].tolist(),
                    loss=data["history.loss"].tolist(),
                    train_ber=data["history.train_ber"].tolist(),
                    val_ber=data["history.val_ber"].tolist(),
                    seconds=data["history.seconds"].tolist(),
                    best_epoch=meta["history"]["best_epoch"],
                    stopped_early=meta["history"]["stopped_early"],
                )
    except IncompatibleCheckpointError:
        raise
    except (zipfile.BadZipFile, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise IncompatibleCheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    tx.eval()
    rx.eval()
    return tx, rx, history
