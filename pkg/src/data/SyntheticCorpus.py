import logging
import math
import os
from pathlib import Path

import torch

from src.models.errors import ConfigurationError


class SyntheticCorpus:
    """
    A class that generates, stores and loads the toy training and test
    corpora: sums of enveloped sinusoids plus low-level noise

    ...

    Methods
    -------
    make_dataset()
        Generates both splits and saves them under data/processed
    generate_clip(generator)
        One clip of clip_seconds seconds
    load(split)
        Loads the saved "training" or "test" tensor (clips, samples)
    """

    def __init__(
        self,
        sample_rate=16000,
        num_train_clips=64,
        num_test_clips=8,
        clip_seconds=2.0,
        min_sinusoids=3,
        max_sinusoids=8,
        min_frequency=60.0,
        max_frequency_ratio=0.45,
        noise_level=0.01,
        seed=7,
        data_folder=None,
        force_process=False,
    ):
        super().__init__()
        if not 1 <= min_sinusoids <= max_sinusoids:
            raise ConfigurationError("Need 1 <= min_sinusoids <= max_sinusoids")
        if not 0.0 < max_frequency_ratio <= 0.5:
            raise ConfigurationError("max_frequency_ratio must lie in (0, 0.5]")
        project_dir = Path(__file__).resolve().parents[2]
        self.sample_rate = sample_rate
        self.num_train_clips = num_train_clips
        self.num_test_clips = num_test_clips
        self.clip_samples = int(round(clip_seconds * sample_rate))
        self.min_sinusoids = min_sinusoids
        self.max_sinusoids = max_sinusoids
        self.min_frequency = min_frequency
        self.max_frequency = max_frequency_ratio * sample_rate
        self.noise_level = noise_level
        self.seed = seed
        self.force_process = force_process
        self.processed_files_folder = (
            str(data_folder)
            if data_folder is not None
            else str(project_dir) + "/data/processed"
        )
        self.processed_training_set = self.processed_files_folder + "/training.pt"
        self.processed_test_set = self.processed_files_folder + "/test.pt"

    @classmethod
    def from_config(cls, corpus_cfg, sample_rate, data_folder=None, force_process=False):
        return cls(
            sample_rate=sample_rate,
            num_train_clips=int(corpus_cfg.num_train_clips),
            num_test_clips=int(corpus_cfg.num_test_clips),
            clip_seconds=float(corpus_cfg.clip_seconds),
            min_sinusoids=int(corpus_cfg.min_sinusoids),
            max_sinusoids=int(corpus_cfg.max_sinusoids),
            min_frequency=float(corpus_cfg.min_frequency),
            max_frequency_ratio=float(corpus_cfg.max_frequency_ratio),
            noise_level=float(corpus_cfg.noise_level),
            seed=int(corpus_cfg.seed),
            data_folder=data_folder,
            force_process=force_process,
        )

    def _uniform(self, generator, n, low, high):
        u = torch.rand(n, generator=generator, dtype=torch.float64)
        return low + (high - low) * u

    def generate_clip(self, generator):
        n = int(
            torch.randint(
                self.min_sinusoids, self.max_sinusoids + 1, (1,), generator=generator
            )
        )
        t = torch.arange(self.clip_samples, dtype=torch.float64) / self.sample_rate
        # Log-uniform frequencies
        log_f = self._uniform(
            generator, n, math.log(self.min_frequency), math.log(self.max_frequency)
        )
        frequencies = torch.exp(log_f)
        amplitudes = self._uniform(generator, n, 0.2, 1.0)
        amplitudes = 0.8 * amplitudes / amplitudes.sum()
        phases = self._uniform(generator, n, 0.0, 2 * math.pi)
        rates = self._uniform(generator, n, 0.25, 4.0)
        envelope_phases = self._uniform(generator, n, 0.0, 2 * math.pi)

        envelopes = 0.5 + 0.5 * torch.sin(
            2 * math.pi * rates.unsqueeze(1) * t + envelope_phases.unsqueeze(1)
        )
        tones = torch.sin(
            2 * math.pi * frequencies.unsqueeze(1) * t + phases.unsqueeze(1)
        )
        clip = (amplitudes.unsqueeze(1) * envelopes * tones).sum(0)
        noise = torch.randn(self.clip_samples, generator=generator, dtype=torch.float64)
        return clip + self.noise_level * noise

    def generate(self, num_clips, seed):
        generator = torch.Generator().manual_seed(seed)
        if num_clips == 0:
            return torch.zeros(0, self.clip_samples, dtype=torch.float64)
        return torch.stack([self.generate_clip(generator) for _ in range(num_clips)])

    def make_dataset(self):
        logger = logging.getLogger(__name__)
        if (
            os.path.isfile(self.processed_training_set)
            and os.path.isfile(self.processed_test_set)
            and not self.force_process
        ):
            logger.info("Synthetic corpus already exists")
            return
        os.makedirs(self.processed_files_folder, exist_ok=True)

        # Test clips come from seed + 1
        train = self.generate(self.num_train_clips, self.seed)
        test = self.generate(self.num_test_clips, self.seed + 1)
        torch.save(train, self.processed_training_set)
        torch.save(test, self.processed_test_set)
        logger.info(
            f"Saved {train.shape[0]} training and {test.shape[0]} test clips "
            f"of {self.clip_samples} samples to {self.processed_files_folder}"
        )

    def load(self, split="training"):
        if split not in ("training", "test"):
            raise ConfigurationError(f"Unknown split {split!r}")
        self.make_dataset()
        if split == "training":
            return torch.load(self.processed_training_set)
        return torch.load(self.processed_test_set)
