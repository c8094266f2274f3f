# -*- coding: utf-8 -*-
from pathlib import Path

from hydra import compose, initialize_config_dir

from src.features.mdct import MdctConfig
from src.features.metrics import LsdConfig
from src.models.Codec import CodecNetConfig
from src.models.codebook import CodebookHealthConfig
from src.models.errors import ConfigurationError
from src.models.rsvq import QuantizerConfig

CONFIG_DIR = Path(__file__).resolve().parent.joinpath("config")
SUPPORTED_SAMPLE_RATES = (16000, 48000)


class Hyperparameters:
    """Composes the YAML tree in src/models/config with hydra overrides,
    e.g. Hyperparameters(["quantizer=high", "codec=sr48k"]).config"""

    def __init__(self, overrides=()):
        with initialize_config_dir(config_dir=str(CONFIG_DIR), version_base=None):
            self.config = compose(config_name="config", overrides=list(overrides))

    @classmethod
    def from_config(cls, config):
        """Wraps an already composed config, e.g. the echo in a checkpoint"""
        hp = cls.__new__(cls)
        hp.config = config
        return hp

    @property
    def sample_rate(self):
        return int(self.config.codec.sample_rate)

    def mdct_config(self):
        return MdctConfig(int(self.config.codec.frame_shift))

    def quantizer_config(self):
        return QuantizerConfig.from_config(self.config.quantizer)

    def net_config(self):
        codec = self.config.codec
        return CodecNetConfig.from_config(
            self.config.network, codec.frame_shift, codec.resample
        )

    def codebook_config(self):
        return CodebookHealthConfig.from_config(self.config.codebook)

    def lsd_config(self):
        return LsdConfig.from_config(self.config.metrics, self.sample_rate)


def profile_overrides(profile=None, sample_rate=None, seed=None, steps=None):
    """Hydra overrides for the command-line flags"""
    overrides = []
    if profile is not None:
        overrides.append(f"quantizer={profile}")
    if sample_rate is not None:
        if int(sample_rate) not in SUPPORTED_SAMPLE_RATES:
            raise ConfigurationError(
                f"Unsupported sample rate {sample_rate}, expected one of "
                f"{SUPPORTED_SAMPLE_RATES}"
            )
        overrides.append(f"codec=sr{int(sample_rate) // 1000}k")
    if seed is not None:
        overrides.append(f"training.seed={int(seed)}")
    if steps is not None:
        overrides.append(f"training.steps={int(steps)}")
    return overrides
