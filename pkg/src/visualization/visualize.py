# -*- coding: utf-8 -*-
import logging
import os
from pathlib import Path

import numpy as np

from src.features.metrics import log_spectrogram
from src.models.CodecSession import CodecSession
from src.models.evaluate_model import align
from src.models.predict_model import decode_tokens, encode_samples
from src.models.rsvq import stage_names


def spectrogram_export(samples, lsd_cfg, path):
    """Writes the (frames x bins) log10-magnitude matrix of samples as CSV"""
    logger = logging.getLogger(__name__)
    matrix = log_spectrogram(samples, lsd_cfg).numpy()
    np.savetxt(path, matrix, delimiter=",", fmt="%.8e")
    logger.info(f"Wrote a {matrix.shape[0]}x{matrix.shape[1]} spectrogram to {path}")
    return matrix.shape


def export_partial_decodes(model, hp, samples, folderpath):
    """Spectrograms of the input and of decodes with 1..N_s+N_v stages.

    Files are named reference.csv, sq1.csv, sq1+ivq1.csv, ... so that the
    coarse scalar stage can be compared with the refined vector stages.
    """
    folder = Path(folderpath)
    os.makedirs(folder, exist_ok=True)
    mdct_cfg = hp.mdct_config()
    lsd_cfg = hp.lsd_config()
    names = stage_names(model.quantizer_cfg)
    tokens = encode_samples(CodecSession(model, mdct_cfg), samples)
    written = {"reference": folder.joinpath("reference.csv")}
    reference = None
    for n in range(1, len(names) + 1):
        decoded = decode_tokens(CodecSession(model, mdct_cfg, num_stages=n), tokens)
        reference, decoded = align(samples, decoded, mdct_cfg.frame_shift)
        path = folder.joinpath("+".join(names[:n]) + ".csv")
        spectrogram_export(decoded, lsd_cfg, path)
        written["+".join(names[:n])] = path
    spectrogram_export(reference, lsd_cfg, written["reference"])
    return written
