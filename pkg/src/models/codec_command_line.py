# -*- coding: utf-8 -*-
import logging
import sys
from pathlib import Path

import click
import torch

from src.data.SyntheticCorpus import SyntheticCorpus
from src.data.bitstream import (
    StreamHeader,
    effective_bitrate,
    load_stream,
    theoretical_bitrate,
)
from src.features.metrics import codebook_report, format_report
from src.models.Codec import build_model
from src.models.Hyperparameters import Hyperparameters, profile_overrides
from src.models.checkpoint import load_model
from src.models.errors import CodecError, ConfigurationError, NumericError
from src.models.evaluate_model import evaluate_model
from src.models.predict_model import decode_file, encode_file
from src.models.selftest import run_selftest
from src.models.train_model import train_model

PROFILES = ["low", "high", "sq_sq_sq", "ivq_ivq_ivq", "sq_vq_vq", "vq_vq_vq"]


def _model_and_hp(checkpoint, profile, sample_rate, seed):
    """Trained model from a checkpoint, or a seeded untrained one"""
    logger = logging.getLogger(__name__)
    if checkpoint is not None:
        model, hp = load_model(checkpoint)
        if profile is not None and profile != hp.config.quantizer.name:
            logger.warning(
                f"Ignoring --profile {profile}: the checkpoint holds a "
                f"{hp.config.quantizer.name} codec"
            )
        return model, hp
    if profile is not None and profile not in PROFILES:
        raise ConfigurationError(
            f"No configuration for profile {profile!r}, pass --checkpoint"
        )
    hp = Hyperparameters(profile_overrides(profile or "low", sample_rate, seed))
    logger.info(
        f"No checkpoint given, using an untrained {hp.config.quantizer.name} codec"
    )
    model = build_model(
        hp.net_config(), hp.quantizer_config(), seed=int(hp.config.training.seed)
    )
    model.eval()
    return model, hp


def _emit(record, report):
    click.echo(format_report(record, report))


@click.group()
def cli():
    """Streamable MDCT codec with residual scalar-vector quantization"""


@cli.command()
@click.argument("wav_in", type=click.Path(dir_okay=False))
@click.argument("bitstream_out", type=click.Path(dir_okay=False))
@click.option("-p", "--profile", type=click.Choice(PROFILES), default=None)
@click.option("-sr", "--sample-rate", type=int, default=None)
@click.option("-c", "--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option(
    "-cs",
    "--chunk-samples",
    type=int,
    default=None,
    help="Push the input in pieces of this many samples (default: all at once)",
)
@click.option("-s", "--seed", type=int, default=None)
@click.option("-r", "--report", type=click.Choice(["text", "json"]), default="text")
def encode(
    wav_in, bitstream_out, profile, sample_rate, checkpoint, chunk_samples, seed, report
):
    """Encodes a mono WAV file into a bitstream"""
    model, hp = _model_and_hp(checkpoint, profile, sample_rate, seed)
    with torch.no_grad():
        perf = encode_file(wav_in, bitstream_out, model, hp, chunk_samples)
    _emit(perf.as_dict(), report)


@cli.command()
@click.argument("bitstream_in", type=click.Path(dir_okay=False))
@click.argument("wav_out", type=click.Path(dir_okay=False))
@click.option("-c", "--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option(
    "-cs",
    "--chunk-samples",
    type=int,
    default=None,
    help="Decode in pieces of this many samples, rounded down to whole frames",
)
@click.option("-s", "--seed", type=int, default=None)
@click.option(
    "-n",
    "--num-stages",
    type=int,
    default=None,
    help="Decode with the first n quantizer stages only",
)
@click.option(
    "-f", "--sample-format", type=click.Choice(["float32", "int16"]), default="float32"
)
@click.option("-r", "--report", type=click.Choice(["text", "json"]), default="text")
def decode(
    bitstream_in,
    wav_out,
    checkpoint,
    chunk_samples,
    seed,
    num_stages,
    sample_format,
    report,
):
    """Decodes a bitstream into a WAV file; profile and rate come from the header"""
    with open(bitstream_in, "rb") as f:
        header = StreamHeader.read_from(f)
    model, hp = _model_and_hp(checkpoint, header.schedule.name, header.sample_rate, seed)
    chunk_frames = None
    if chunk_samples is not None:
        chunk_frames = max(1, chunk_samples // header.samples_per_frame)
    with torch.no_grad():
        perf = decode_file(
            bitstream_in, wav_out, model, hp, chunk_frames, num_stages, sample_format
        )
    _emit(perf.as_dict(), report)


@cli.command(name="train-toy")
@click.option("-p", "--profile", type=click.Choice(PROFILES), default="low")
@click.option("-sr", "--sample-rate", type=int, default=None)
@click.option("-s", "--seed", type=int, default=None)
@click.option("-st", "--steps", type=int, default=None)
@click.option(
    "-o",
    "--output-dir",
    type=click.Path(file_okay=False),
    default=".",
    help="Project folder receiving data/, models/ and reports/",
)
@click.option("-r", "--report", type=click.Choice(["text", "json"]), default="text")
def train_toy(profile, sample_rate, seed, steps, output_dir, report):
    """Trains a codec on the synthetic corpus, then evaluates it on held-out clips"""
    hp = Hyperparameters(profile_overrides(profile, sample_rate, seed, steps))
    project_dir = Path(output_dir)
    corpus = SyntheticCorpus.from_config(
        hp.config.corpus,
        hp.sample_rate,
        data_folder=project_dir.joinpath("data", "processed"),
    )
    model, history = train_model(
        hp,
        corpus.load("training"),
        save_training_results=True,
        project_dir=project_dir,
    )
    with torch.no_grad():
        results = evaluate_model(model, hp, corpus.load("test"))
    results["checkpoint"] = str(project_dir.joinpath(hp.config.paths.checkpoint_filepath))
    results["epochs"] = len(history)
    _emit(results, report)


@cli.command()
@click.argument("bitstream_in", type=click.Path(dir_okay=False))
@click.option("-r", "--report", type=click.Choice(["text", "json"]), default="text")
def analyze(bitstream_in, report):
    """Prints the header, both bitrates and per-stage codebook usage"""
    header, tokens = load_stream(bitstream_in)
    theoretical = theoretical_bitrate(header.schedule, header)
    effective = effective_bitrate(header) if header.frame_count else 0.0
    overhead = 100.0 * (effective / theoretical - 1.0) if header.frame_count else 0.0
    record = {
        "profile": header.schedule.name,
        "sample_rate": header.sample_rate,
        "frame_shift": header.frame_shift,
        "resample": header.resample,
        "delay_samples": header.delay_samples,
        "frames": header.frame_count,
        "theoretical_bps": theoretical,
        "effective_bps": effective,
        "overhead_pct": round(overhead, 2),
    }
    if header.frame_count:
        usage = codebook_report(tokens, header.schedule)
        record["stages"] = usage["stages"]
        record["be"] = usage["be"]
    if report == "text":
        click.echo(
            f"{theoretical:.1f} bps (theoretical), {effective:.1f} bps (effective)"
        )
    _emit(record, report)


@cli.command()
@click.option("-s", "--seed", type=int, default=0)
@click.option("-r", "--report", type=click.Choice(["text", "json"]), default="text")
def selftest(seed, report):
    """Runs the quick invariant checks"""
    results = run_selftest(seed)
    _emit({name: {"ok": ok, "detail": detail} for name, ok, detail in results}, report)
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        raise NumericError(f"Selftest failed: {', '.join(failed)}")


def main(argv=None):
    """Runs the command line and returns its exit code"""
    logger = logging.getLogger(__name__)
    try:
        cli.main(args=argv, prog_name="rsvq-codec", standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except CodecError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(str(e))
        return 2
    return 0


def run():
    log_fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(level=logging.INFO, format=log_fmt)
    sys.exit(main())


if __name__ == "__main__":
    run()
