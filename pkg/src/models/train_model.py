import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import torch
from torch import optim

from src.features.mdct import mdct_frames
from src.features.metrics import codebook_report
from src.models.Codec import build_model
from src.models.checkpoint import save_checkpoint
from src.models.codebook import CodebookHealth, commitment_loss, soft_balancing_loss
from src.models.errors import ConfigurationError, TrainingError
from src.models.rsvq import stage_names


@dataclass(frozen=True)
class TrainingConfig:
    seed: int = 7
    steps: int = 2000
    steps_per_epoch: int = 100
    batch_size: int = 8
    segment_frames: int = 64
    learning_rate: float = 2e-4
    commitment_weight: float = 1.0
    commitment_beta: float = 0.25
    balancing_weight: float = 1.0

    @classmethod
    def from_config(cls, cfg):
        return cls(**{f.name: f.type(cfg[f.name]) for f in fields(cls)})


def loss_terms(model, frames, cfg: TrainingConfig, temperature=1.0, epsilon=1e-10):
    """MDCT-domain MSE plus commitment and balancing terms of one batch"""
    decoded, result = model(frames)
    mse = (decoded - frames).pow(2).mean()
    commitment = frames.new_zeros(())
    balancing = frames.new_zeros(())
    for stage_cfg, v_prime, selected, distances in zip(
        model.quantizer_cfg.ivq_stages,
        result.ivq_inputs,
        result.ivq_selected,
        result.ivq_distances,
    ):
        commitment = commitment + commitment_loss(v_prime, selected, cfg.commitment_beta)
        if stage_cfg.improved:
            balancing = balancing + soft_balancing_loss(distances, temperature, epsilon)
    total = mse + cfg.commitment_weight * commitment + cfg.balancing_weight * balancing
    return {
        "total": total,
        "mse": mse,
        "commitment": commitment,
        "balancing": balancing,
    }, result


def step_seed(seed, step):
    return (seed * 1000003 + step) % (2 ** 31)


def train_step(model, optimizer, frames, cfg: TrainingConfig, health=None, step=0,
               health_cfg=None):
    """One optimiser step; returns float losses and the batch tokens"""
    model.train()
    optimizer.zero_grad()
    temperature = health_cfg.temperature if health_cfg is not None else 1.0
    epsilon = health_cfg.epsilon if health_cfg is not None else 1e-10
    losses, result = loss_terms(model, frames, cfg, temperature, epsilon)
    values = {name: float(value.detach()) for name, value in losses.items()}
    if not all(math.isfinite(v) for v in values.values()):
        raise TrainingError(f"Non-finite loss at step {step}: {values}")
    losses["total"].backward()
    optimizer.step()

    tokens = result.tokens.detach()
    if health:
        num_sq = model.quantizer_cfg.num_sq
        for j, manager in health.items():
            stage = model.quantizer.ivq_stages[j]
            manager.step(
                stage.codebook,
                tokens[..., num_sq + j],
                result.ivq_inputs[j].detach(),
                seed=step_seed(cfg.seed, step),
            )
    return values, tokens


def sample_batch(clips, cfg: TrainingConfig, samples_per_segment, generator):
    """Random segments (batch, samples) of the clip tensor"""
    num_clips, clip_samples = clips.shape
    if clip_samples < samples_per_segment:
        raise ConfigurationError("Clips are shorter than one training segment")
    index = torch.randint(0, num_clips, (cfg.batch_size,), generator=generator)
    offset = torch.randint(
        0, clip_samples - samples_per_segment + 1, (cfg.batch_size,), generator=generator
    )
    return torch.stack(
        [
            clips[i, o: o + samples_per_segment]
            for i, o in zip(index.tolist(), offset.tolist())
        ]
    )


def train_model(hp, clips, steps=None, save_training_results=False, project_dir=None):
    """Trains a fresh codec on `clips` (clips, samples).

    Returns (model, history) where history holds one entry per epoch of
    mean losses, per-stage CUR and entropy, and overall BE.
    """
    logger = logging.getLogger(__name__)
    cfg = TrainingConfig.from_config(hp.config.training)
    if steps is not None:
        cfg = dataclasses.replace(cfg, steps=int(steps))
    mdct_cfg = hp.mdct_config()
    net_cfg = hp.net_config()
    quantizer_cfg = hp.quantizer_config()
    health_cfg = hp.codebook_config()
    if cfg.segment_frames % net_cfg.resample:
        raise ConfigurationError("segment_frames must be a multiple of the resample rate")

    # Set the seed for reproducibility
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)

    model = build_model(net_cfg, quantizer_cfg, seed=cfg.seed)
    optimizer = optim.Adam(model.parameters(), lr=cfg.learning_rate)
    ivq_names = stage_names(quantizer_cfg)[quantizer_cfg.num_sq:]
    health = {
        j: CodebookHealth(stage.codebook_size, health_cfg, name)
        for j, (stage, name) in enumerate(
            zip(quantizer_cfg.ivq_stages, ivq_names)
        )
        if stage.improved
    }

    logger.info(
        f"Training a {quantizer_cfg.name} codec for {cfg.steps} steps "
        f"(batch {cfg.batch_size}, {cfg.segment_frames} frames per segment)"
    )
    samples_per_segment = cfg.segment_frames * mdct_cfg.frame_shift
    clips = torch.as_tensor(clips, dtype=torch.float64)
    history = []
    epoch_losses, epoch_tokens = [], []
    for step in range(cfg.steps):
        batch = sample_batch(clips, cfg, samples_per_segment, generator)
        frames = mdct_frames(batch, mdct_cfg)
        values, tokens = train_step(
            model, optimizer, frames, cfg, health, step, health_cfg
        )
        epoch_losses.append(values)
        epoch_tokens.append(tokens.reshape(-1, quantizer_cfg.num_stages))

        if (step + 1) % cfg.steps_per_epoch == 0 or step + 1 == cfg.steps:
            record = {"epoch": len(history) + 1, "step": step + 1}
            for name in values:
                record[name] = float(np.mean([v[name] for v in epoch_losses]))
            report = codebook_report(torch.cat(epoch_tokens), quantizer_cfg)
            record["stages"] = report["stages"]
            record["be"] = report["be"]
            history.append(record)
            logger.info(
                str("Epoch: {}.. ".format(record["epoch"]))
                + str("Step: {}/{}.. ".format(step + 1, cfg.steps))
                + str("MSE: {:.5f}.. ".format(record["mse"]))
                + str("Commitment: {:.5f}.. ".format(record["commitment"]))
                + str("Balancing: {:.4f}.. ".format(record["balancing"]))
                + str("BE: {:.3f}".format(record["be"]))
            )
            epoch_losses, epoch_tokens = [], []

    if save_training_results:
        save_results(project_dir, hp, model, history)
    return model, history


def save_results(project_dir, hp, model, history):
    """Checkpoint, JSON-lines metrics log and training curves"""
    project_dir = (
        Path(__file__).resolve().parents[2] if project_dir is None else Path(project_dir)
    )
    paths = hp.config.paths
    checkpoint_path = project_dir.joinpath(paths.checkpoint_filepath)
    log_path = project_dir.joinpath(paths.metrics_log_filepath)
    figures_path = project_dir.joinpath(paths.training_figures_filepath)
    for folder in (checkpoint_path.parent, log_path.parent, figures_path):
        os.makedirs(folder, exist_ok=True)

    save_checkpoint(checkpoint_path, model, hp.config)
    with open(log_path, "w") as f:
        for record in history:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    epochs = [record["epoch"] for record in history]

    # Plot the training loss curves
    f = plt.figure(figsize=(12, 8))
    for name in ("mse", "commitment", "balancing"):
        plt.plot(epochs, [record[name] for record in history], label=name)
    plt.xlabel("Epoch number")
    plt.ylabel("Loss")
    plt.yscale("log")
    plt.legend()
    f.savefig(figures_path.joinpath("Training_Loss.pdf"), bbox_inches="tight")
    plt.close(f)

    # Plot the codebook utilisation curves
    f = plt.figure(figsize=(12, 8))
    for name in history[0]["stages"] if history else []:
        plt.plot(
            epochs,
            [record["stages"][name]["cur"] for record in history],
            label=f"CUR {name}",
        )
    plt.plot(epochs, [record["be"] for record in history], "k--", label="BE")
    plt.xlabel("Epoch number")
    plt.ylabel("Utilisation")
    plt.legend()
    f.savefig(figures_path.joinpath("Codebook_Utilisation.pdf"), bbox_inches="tight")
    plt.close(f)
