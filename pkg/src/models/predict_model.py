# -*- coding: utf-8 -*-
import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass

import torch

from src.data.bitstream import StreamHeader, StreamWriter, load_stream
from src.data.wav_io import read_wav, write_wav
from src.features.mdct import imdct_synthesis, mdct_analysis
from src.models.CodecSession import CodecSession
from src.models.errors import ConfigurationError, NumericError


@dataclass
class PerfReport:
    """Timing and size figures of one encode/decode run"""

    rtf_encode: float = None
    rtf_decode: float = None
    latency_ms: float = None
    frames: int = 0
    audio_seconds: float = 0.0
    parameters: int = 0

    def as_dict(self):
        return dataclasses.asdict(self)


def algorithmic_latency_ms(frame_shift, resample, sample_rate):
    return 1000.0 * frame_shift * resample / sample_rate


def stream_header(model, hp, frame_count=None):
    codec = hp.config.codec
    return StreamHeader(
        sample_rate=int(codec.sample_rate),
        frame_shift=int(codec.frame_shift),
        resample=int(codec.resample),
        schedule=model.quantizer_cfg,
        frame_count=frame_count,
        delay_samples=int(codec.frame_shift),
    )


def check_stream_compatible(header: StreamHeader, model, hp):
    expected = stream_header(model, hp)
    for name in ("sample_rate", "frame_shift", "resample"):
        if getattr(header, name) != getattr(expected, name):
            raise ConfigurationError(
                f"Stream {name} {getattr(header, name)} does not match the "
                f"checkpoint ({getattr(expected, name)})"
            )
    if dataclasses.replace(header.schedule, name=model.quantizer_cfg.name) != (
        model.quantizer_cfg
    ):
        raise ConfigurationError("Stream stage schedule does not match the checkpoint")


def _pieces(x, size):
    if size is None or size <= 0:
        return [x]
    return list(x.split(size))


def encode_samples(session: CodecSession, samples, chunk_samples=None):
    """Tokens (frames, N_s + N_v) of a whole signal pushed in pieces"""
    session.reset()
    samples = torch.as_tensor(samples, dtype=torch.float64).flatten()
    tokens = [session.encode_push(piece) for piece in _pieces(samples, chunk_samples)]
    tokens.append(session.encode_flush())
    return torch.cat(tokens)


def decode_tokens(session: CodecSession, tokens, chunk_frames=None):
    session.reset()
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    out = [session.decode_push(piece) for piece in _pieces(tokens, chunk_frames)]
    return torch.cat(out) if out else torch.zeros(0, dtype=torch.float64)


def encode_file(wav_in, bitstream_out, model, hp, chunk_samples=None):
    """Streams a WAV file through the encoder into a bitstream file"""
    logger = logging.getLogger(__name__)
    samples, rate = read_wav(wav_in, hp.sample_rate)
    session = CodecSession(model, hp.mdct_config())
    start = time.perf_counter()
    with open(bitstream_out, "wb") as f:
        writer = StreamWriter(f, stream_header(model, hp))
        session.reset()
        for piece in _pieces(samples, chunk_samples):
            writer.write_frames(session.encode_push(piece))
        writer.write_frames(session.encode_flush())
        header = writer.close()
    elapsed = time.perf_counter() - start
    seconds = samples.numel() / rate
    logger.info(f"Encoded {seconds:.2f} s into {header.frame_count} frames")
    return PerfReport(
        rtf_encode=elapsed / seconds if seconds else None,
        latency_ms=algorithmic_latency_ms(header.frame_shift, header.resample, rate),
        frames=header.frame_count,
        audio_seconds=seconds,
        parameters=model.parameter_count(),
    )


def decode_file(
    bitstream_in,
    wav_out,
    model,
    hp,
    chunk_frames=None,
    num_stages=None,
    sample_format="float32",
):
    """Decodes a bitstream file to WAV; output keeps the header's delay"""
    logger = logging.getLogger(__name__)
    header, tokens = load_stream(bitstream_in)
    check_stream_compatible(header, model, hp)
    session = CodecSession(model, hp.mdct_config(), num_stages)
    start = time.perf_counter()
    samples = decode_tokens(session, tokens, chunk_frames)
    elapsed = time.perf_counter() - start
    write_wav(wav_out, samples, header.sample_rate, sample_format)
    seconds = samples.numel() / header.sample_rate
    logger.info(f"Decoded {header.frame_count} frames into {seconds:.2f} s of audio")
    return PerfReport(
        rtf_decode=elapsed / seconds if seconds else None,
        latency_ms=algorithmic_latency_ms(
            header.frame_shift, header.resample, header.sample_rate
        ),
        frames=header.frame_count,
        audio_seconds=seconds,
        parameters=model.parameter_count(),
    )


def _run_sample_by_sample(session, signal):
    """Output emitted after every single-sample push"""
    session.reset()
    emitted = []
    for sample in signal:
        tokens = session.encode_push(sample.reshape(1))
        emitted.append(session.decode_push(tokens))
    return emitted


def measure_latency(model, mdct_cfg, sample_rate, trials=4, seed=0):
    """Impulse-to-first-affected-output delay in samples and milliseconds.

    An impulse is added at the start of a chunk on top of a random signal;
    the latency is the number of samples pushed from the impulse up to and
    including the push whose output first differs from the clean run.
    """
    session = CodecSession(model, mdct_cfg)
    n = session.chunk_samples
    position = 2 * n
    generator = torch.Generator().manual_seed(seed)
    measured = []
    for trial in range(trials):
        clean = 0.1 * torch.randn(5 * n, generator=generator, dtype=torch.float64)
        altered = clean.clone()
        altered[position] += 1.0 if trial % 2 == 0 else -1.0
        reference = _run_sample_by_sample(session, clean)
        perturbed = _run_sample_by_sample(session, altered)
        for index, (a, b) in enumerate(zip(reference, perturbed)):
            if not torch.equal(a, b):
                measured.append(index - position + 1)
                break
    if not measured:
        raise NumericError("The impulse never reached the decoder output")
    samples = min(measured)
    return samples, 1000.0 * samples / sample_rate


def _median_time(fn, runs):
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def measure_rtf(model, mdct_cfg, samples, sample_rate, runs=5):
    """Single-thread median real-time factors of encode and decode"""
    samples = torch.as_tensor(samples, dtype=torch.float64).flatten()
    seconds = samples.numel() / sample_rate
    session = CodecSession(model, mdct_cfg)
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        tokens = encode_samples(session, samples)
        encode_time = _median_time(lambda: encode_samples(session, samples), runs)
        decode_time = _median_time(lambda: decode_tokens(session, tokens), runs)
    finally:
        torch.set_num_threads(threads)
    return PerfReport(
        rtf_encode=encode_time / seconds,
        rtf_decode=decode_time / seconds,
        latency_ms=algorithmic_latency_ms(
            mdct_cfg.frame_shift, model.net_cfg.resample, sample_rate
        ),
        frames=tokens.shape[0],
        audio_seconds=seconds,
        parameters=model.parameter_count(),
    )


def passthrough_rtf(mdct_cfg, samples, sample_rate, runs=5):
    """RTF of MDCT analysis and synthesis alone"""
    samples = torch.as_tensor(samples, dtype=torch.float64).flatten()
    elapsed = _median_time(
        lambda: imdct_synthesis(mdct_analysis(samples, mdct_cfg), mdct_cfg), runs
    )
    return elapsed / (samples.numel() / sample_rate)
