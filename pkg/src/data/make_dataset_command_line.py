# -*- coding: utf-8 -*-
import logging

import click

from src.data.SyntheticCorpus import SyntheticCorpus
from src.models.Hyperparameters import Hyperparameters, profile_overrides


@click.command()
@click.option(
    "-fp/-no-fp",
    "--force_process/--no_force_process",
    type=bool,
    default=False,
    help="Regenerate the corpus even if it already exists",
)
@click.option(
    "-sr",
    "--sample_rate",
    type=int,
    default=16000,
    help="Sample rate of the generated clips (16000 or 48000)",
)
@click.option(
    "-df",
    "--data_folder",
    type=click.Path(file_okay=False),
    default=None,
    help="Output folder (default: data/processed in the project)",
)
def main(force_process, sample_rate, data_folder):
    """Generates the synthetic training and test corpora (saved in ../processed)"""
    logger = logging.getLogger(__name__)
    logger.info("making the synthetic corpus")
    hp = Hyperparameters(profile_overrides(sample_rate=sample_rate))
    corpus = SyntheticCorpus.from_config(
        hp.config.corpus,
        hp.sample_rate,
        data_folder=data_folder,
        force_process=force_process,
    )
    corpus.make_dataset()


if __name__ == "__main__":
    log_fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(level=logging.INFO, format=log_fmt)

    main()
