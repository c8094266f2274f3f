# -*- coding: utf-8 -*-
"""Quick invariant checks run by `rsvq-codec selftest`."""
import itertools
import logging

import torch

from src.data.bitstream import (
    StreamHeader,
    decode_bytes,
    encode_bytes,
    pack_frame,
    theoretical_bitrate,
    unpack_frame,
)
from src.features.mdct import MdctConfig, imdct_synthesis, mdct_analysis
from src.models.Codec import CodecNetConfig, build_model
from src.models.rsvq import (
    RECONSTRUCTION_ATOL,
    IvqStageConfig,
    QuantizerConfig,
    ResidualScalarVectorQuantizer,
    SqStageConfig,
    rsvq_dequantize,
    rsvq_quantize,
    sq_detokenize,
    sq_tokenize,
)
from src.models.predict_model import measure_latency

LOW = QuantizerConfig(
    32,
    (SqStageConfig((4, 4, 4, 4, 4)),),
    (IvqStageConfig(32, 1024), IvqStageConfig(32, 1024)),
    name="low",
)
HIGH = QuantizerConfig(
    32,
    (SqStageConfig((11, 11, 10, 10, 10, 9)),),
    (IvqStageConfig(32, 1024), IvqStageConfig(32, 1024)),
    name="high",
)


def check_mdct_reconstruction(generator):
    worst = 0.0
    for frame_shift in (40, 80):
        cfg = MdctConfig(frame_shift)
        x = torch.randn(16000, generator=generator, dtype=torch.float64)
        y = imdct_synthesis(mdct_analysis(x, cfg, flush=True), cfg)
        delayed = y[2 * frame_shift: 16000] - x[frame_shift: 16000 - frame_shift]
        error = delayed.abs().max()
        worst = max(worst, float(error))
    return worst < 1e-10, f"max error {worst:.2e}"


def check_token_bijection(generator):
    levels = LOW.sq_stages[0].levels
    digits = torch.tensor(list(itertools.product(*[range(level) for level in levels])))
    digits = digits.flip(-1)
    tokens = sq_tokenize(digits, levels)
    ok = torch.equal(sq_detokenize(tokens, levels), digits)
    ok = ok and torch.equal(tokens.sort().values, torch.arange(1024))
    return ok, "1024 low-profile codes"


def check_quantizer_round_trip(generator):
    torch.manual_seed(int(torch.randint(0, 2 ** 31, (1,), generator=generator)))
    quantizer = ResidualScalarVectorQuantizer(HIGH).double()
    z = torch.randn(1000, 32, generator=generator, dtype=torch.float64)
    result = rsvq_quantize(z, quantizer)
    telescoping = torch.allclose(
        result.z_hat + result.residuals[-1], z, rtol=0, atol=RECONSTRUCTION_ATOL
    )
    round_trip = torch.equal(rsvq_dequantize(result.tokens, quantizer), result.z_hat)
    return telescoping and round_trip, "1000 latents, high profile"


def check_bitrates(generator):
    expected = [(LOW, 16000, 1500.0), (LOW, 48000, 4500.0), (HIGH, 16000, 2002.7)]
    ok = True
    for cfg, rate, bps in expected:
        header = StreamHeader(rate, 40, 8, cfg)
        ok = ok and abs(theoretical_bitrate(cfg, header) - bps) < 0.1
    return ok, "bitrate formula at 16 and 48 kHz"


def check_bitstream(generator):
    ok = True
    for cfg in (LOW, HIGH):
        tokens = torch.stack(
            [torch.randint(0, c, (200,), generator=generator) for c in cfg.capacities], -1
        )
        ok = ok and all(
            unpack_frame(pack_frame(t.tolist(), cfg), cfg).as_list() == t.tolist()
            for t in tokens[:50]
        )
        data = encode_bytes(StreamHeader(16000, 40, 8, cfg), tokens)
        header, decoded = decode_bytes(data)
        ok = ok and torch.equal(decoded, tokens) and header.frame_count == 200
    return ok, "pack/unpack and stream round trip"


def check_causality(generator):
    net_cfg = CodecNetConfig(hidden=8, num_blocks=2)
    model = build_model(net_cfg, LOW, seed=0)
    frames = torch.randn(1, 40, 64, generator=generator, dtype=torch.float64)
    altered = frames.clone()
    altered[..., 40:] += torch.randn(1, 40, 24, generator=generator, dtype=torch.float64)
    with torch.no_grad():
        ok = torch.equal(model.encoder(frames)[..., :5], model.encoder(altered)[..., :5])
        ok = ok and torch.equal(
            model.decoder(model.encoder(frames))[..., :40],
            model.decoder(model.encoder(altered))[..., :40],
        )
    return ok, "encoder and decoder prefix perturbation"


def check_latency(generator):
    model = build_model(CodecNetConfig(hidden=8, num_blocks=2), LOW, seed=0)
    samples, ms = measure_latency(model, MdctConfig(40), 16000)
    return samples == 320, f"{samples} samples = {ms:.2f} ms at 16 kHz"


CHECKS = [
    check_mdct_reconstruction,
    check_token_bijection,
    check_quantizer_round_trip,
    check_bitrates,
    check_bitstream,
    check_causality,
    check_latency,
]


def run_selftest(seed=0):
    """Runs every check; returns a list of (name, passed, detail)"""
    logger = logging.getLogger(__name__)
    generator = torch.Generator().manual_seed(seed)
    results = []
    for check in CHECKS:
        name = check.__name__[len("check_"):]
        passed, detail = check(generator)
        logger.info(f"{name}: {'ok' if passed else 'FAILED'} ({detail})")
        results.append((name, bool(passed), detail))
    return results
