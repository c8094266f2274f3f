# -*- coding: utf-8 -*-
import logging

import click

from src.data.wav_io import read_wav
from src.models.checkpoint import load_model
from src.visualization.visualize import export_partial_decodes


@click.command()
@click.argument("checkpoint_filepath", type=click.Path(exists=True))
@click.argument("wav_filepath", type=click.Path(exists=True))
@click.argument(
    "spectrogram_folderpath", type=click.Path(), default="reports/spectrograms/"
)
def main(checkpoint_filepath, wav_filepath, spectrogram_folderpath):
    """Exports CSV spectrograms of WAV_FILEPATH decoded with an increasing
    number of quantizer stages"""
    model, hp = load_model(checkpoint_filepath)
    samples, _ = read_wav(wav_filepath, hp.sample_rate)
    export_partial_decodes(model, hp, samples, spectrogram_folderpath)


if __name__ == "__main__":
    log_fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(level=logging.INFO, format=log_fmt)
    main()
