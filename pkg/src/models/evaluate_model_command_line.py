# -*- coding: utf-8 -*-
import logging

import click
import torch

from src.data.SyntheticCorpus import SyntheticCorpus
from src.features.metrics import format_report
from src.models.checkpoint import load_model
from src.models.evaluate_model import evaluate_model


@click.command()
@click.argument(
    "checkpoint_filepath", type=click.Path(exists=True), default="models/codec.ckpt"
)
@click.option(
    "-df",
    "--data_folder",
    type=click.Path(file_okay=False),
    default=None,
    help="Folder holding test.pt (default: data/processed in the project)",
)
def evaluate_model_command_line(checkpoint_filepath, data_folder):
    """Evaluates a trained codec on the synthetic test clips"""
    model, hp = load_model(checkpoint_filepath)
    corpus = SyntheticCorpus.from_config(hp.config.corpus, hp.sample_rate, data_folder)
    with torch.no_grad():
        results = evaluate_model(model, hp, corpus.load("test"))
    click.echo(format_report(results))


if __name__ == "__main__":
    log_fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(level=logging.INFO, format=log_fmt)
    evaluate_model_command_line()
