"""Block autoencoder link simulator.

End-to-end learned coding and modulation over differentiable AWGN and
multipath channels, with classical Gray 64-QAM / convolutional-code
baselines and Monte-Carlo BER tooling.
"""

from .channel import (ChannelProfile, NoiseSpec, apply_awgn, apply_channel,
                      apply_multipath, awgn_profile, channel_a, channel_b, noise_variance)
from .framing import Dataset, batch_iterator, frame_stream, generate_dataset
from .model import (LinkConfig, Receiver, Transmitter, build_receiver, build_transmitter,
                    hard_decision, normalize_power, receive, transmit)
from .trainer import (TrainConfig, TrainingHistory, TrainSeeds, load_checkpoint,
                      save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "ChannelProfile", "NoiseSpec", "apply_awgn", "apply_channel", "apply_multipath",
    "awgn_profile", "channel_a", "channel_b", "noise_variance",
    "Dataset", "batch_iterator", "frame_stream", "generate_dataset",
    "LinkConfig", "Receiver", "Transmitter", "build_receiver", "build_transmitter",
    "hard_decision", "normalize_power", "receive", "transmit",
    "TrainConfig", "TrainingHistory", "TrainSeeds", "load_checkpoint", "save_checkpoint",
    "train",
    "__version__",
]
