# -*- coding: utf-8 -*-
import logging

import numpy as np
import torch

from src.features.metrics import codebook_report, lsd
from src.models.CodecSession import CodecSession
from src.models.predict_model import decode_tokens, encode_samples
from src.models.rsvq import stage_names


def align(reference, decoded, delay):
    """Drops the decoder delay and trims both signals to a common length"""
    decoded = decoded[delay:]
    n = min(reference.numel(), decoded.numel())
    return reference[:n], decoded[:n]


def evaluate_model(model, hp, clips):
    """LSD of full and partial decodes plus codebook usage on test clips"""
    logger = logging.getLogger(__name__)
    logger.info(f"Evaluating the codec on {len(clips)} clips")
    mdct_cfg = hp.mdct_config()
    lsd_cfg = hp.lsd_config()
    quantizer_cfg = model.quantizer_cfg
    names = stage_names(quantizer_cfg)
    delay = mdct_cfg.frame_shift
    model.eval()

    session = CodecSession(model, mdct_cfg)
    partial_sessions = {
        n: CodecSession(model, mdct_cfg, num_stages=n)
        for n in range(1, quantizer_cfg.num_stages + 1)
    }
    all_tokens = []
    partial = {n: [] for n in partial_sessions}
    for clip in torch.as_tensor(clips, dtype=torch.float64):
        tokens = encode_samples(session, clip)
        all_tokens.append(tokens)
        for n, partial_session in partial_sessions.items():
            decoded = decode_tokens(partial_session, tokens)
            partial[n].append(lsd(*align(clip, decoded, delay), lsd_cfg))

    results = {
        "lsd": float(np.mean(partial[quantizer_cfg.num_stages])),
        "partial_lsd": {
            "+".join(names[:n]): float(np.mean(values)) for n, values in partial.items()
        },
    }
    results.update(codebook_report(torch.cat(all_tokens), quantizer_cfg))
    logger.info(
        "LSD: {:.4f}.. BE: {:.3f}".format(results["lsd"], results["be"])
    )
    return results
