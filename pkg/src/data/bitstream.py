# -*- coding: utf-8 -*-
"""Fixed-width token bitstream.

Layout: header (little-endian), then every frame packed MSB-first into
sum(ceil(log2 capacity)) bits, frames back to back, zero padding up to
the next byte boundary. A stream whose header keeps the streaming
sentinel ends with a little-endian 4-byte frame count.
"""
import io
import logging
import math
import struct
from dataclasses import dataclass, replace

import torch

from src.models.errors import CorruptionError, MetricError, StreamError
from src.models.rsvq import IvqStageConfig, QuantizerConfig, SqStageConfig, TokenFrame

MAGIC = b"SCBS"
VERSION = 1
STREAMING_FRAME_COUNT = 0xFFFFFFFF
OFFSET_RULES = ("parity", "printed")

_PREAMBLE = struct.Struct("<4sH")
_FIELDS = struct.Struct("<IHHHIBBBB")
_SQ_STAGE = struct.Struct("<B")
_IVQ_STAGE = struct.Struct("<IHB")
_FRAME_COUNT = struct.Struct("<I")


@dataclass(frozen=True)
class StreamHeader:
    sample_rate: int
    frame_shift: int
    resample: int
    schedule: QuantizerConfig
    frame_count: int = None
    delay_samples: int = 0
    version: int = VERSION

    @property
    def frames_per_second(self):
        return self.sample_rate / (self.frame_shift * self.resample)

    @property
    def samples_per_frame(self):
        return self.frame_shift * self.resample

    def to_bytes(self):
        s = self.schedule
        name = s.name.encode("utf-8")[:255]
        out = [_PREAMBLE.pack(MAGIC, self.version)]
        out.append(
            _FIELDS.pack(
                self.sample_rate,
                self.frame_shift,
                self.resample,
                s.latent_dim,
                self.delay_samples,
                OFFSET_RULES.index(s.offset_rule),
                s.num_sq,
                s.num_ivq,
                len(name),
            )
        )
        out.append(name)
        for stage in s.sq_stages:
            out.append(_SQ_STAGE.pack(len(stage.levels)))
            out.append(bytes(stage.levels))
        for stage in s.ivq_stages:
            out.append(
                _IVQ_STAGE.pack(stage.codebook_size, stage.code_dim, int(stage.improved))
            )
        count = STREAMING_FRAME_COUNT if self.frame_count is None else self.frame_count
        out.append(_FRAME_COUNT.pack(count))
        return b"".join(out)

    @classmethod
    def read_from(cls, stream):
        """Parses a header from a binary file object positioned at its start"""

        def take(n):
            data = stream.read(n)
            if len(data) != n:
                raise StreamError("Bitstream header is truncated")
            return data

        magic, version = _PREAMBLE.unpack(take(_PREAMBLE.size))
        if magic != MAGIC:
            raise CorruptionError(f"Not a codec bitstream (magic {magic!r})")
        if version != VERSION:
            raise CorruptionError(
                f"Unsupported bitstream version {version}, expected {VERSION}"
            )
        (
            sample_rate,
            frame_shift,
            resample,
            latent_dim,
            delay,
            rule,
            num_sq,
            num_ivq,
            name_length,
        ) = _FIELDS.unpack(take(_FIELDS.size))
        name = take(name_length).decode("utf-8", errors="replace")
        if rule >= len(OFFSET_RULES):
            raise CorruptionError(f"Unknown offset rule code {rule}")
        sq = []
        for _ in range(num_sq):
            (n,) = _SQ_STAGE.unpack(take(_SQ_STAGE.size))
            sq.append(SqStageConfig(tuple(take(n))))
        ivq = []
        for _ in range(num_ivq):
            k, m, improved = _IVQ_STAGE.unpack(take(_IVQ_STAGE.size))
            ivq.append(IvqStageConfig(m, k, bool(improved)))
        (count,) = _FRAME_COUNT.unpack(take(_FRAME_COUNT.size))
        try:
            schedule = QuantizerConfig(
                latent_dim, tuple(sq), tuple(ivq), OFFSET_RULES[rule], name
            )
        except ValueError as e:
            raise CorruptionError(f"Invalid stage schedule in header: {e}")
        return cls(
            sample_rate=sample_rate,
            frame_shift=frame_shift,
            resample=resample,
            schedule=schedule,
            frame_count=None if count == STREAMING_FRAME_COUNT else count,
            delay_samples=delay,
            version=version,
        )

    @classmethod
    def from_bytes(cls, data):
        return cls.read_from(io.BytesIO(data))


def token_widths(cfg: QuantizerConfig):
    """ceil(log2 capacity) per stage"""
    return [(capacity - 1).bit_length() for capacity in cfg.capacities]


def frame_width(cfg: QuantizerConfig):
    return sum(token_widths(cfg))


def theoretical_bitrate(cfg: QuantizerConfig, header: StreamHeader):
    """f_s / (w_s R) times the summed log2 stage capacities"""
    bits = sum(math.log2(level) for s in cfg.sq_stages for level in s.levels)
    bits += sum(math.log2(s.codebook_size) for s in cfg.ivq_stages)
    return header.frames_per_second * bits


def effective_bitrate(header: StreamHeader, frame_count=None):
    """Payload bits over audio duration for the fixed-width packing"""
    frame_count = header.frame_count if frame_count is None else frame_count
    if not frame_count:
        raise MetricError("Effective bitrate needs at least one frame")
    payload = frame_count * frame_width(header.schedule)
    duration = frame_count * header.samples_per_frame / header.sample_rate
    return payload / duration


def pack_frame(tokens, cfg: QuantizerConfig):
    """'0'/'1' string of one frame, SQ tokens first, MSB first"""
    if not isinstance(tokens, TokenFrame):
        tokens = TokenFrame.from_list(tokens, cfg)
    tokens.validate(cfg)
    return "".join(
        format(token, f"0{width}b") if width else ""
        for token, width in zip(tokens.as_list(), token_widths(cfg))
    )


def unpack_frame(bits, cfg: QuantizerConfig):
    width = frame_width(cfg)
    if len(bits) != width:
        raise StreamError(f"Expected a frame of {width} bits, got {len(bits)}")
    tokens, position = [], 0
    for width_i, capacity in zip(token_widths(cfg), cfg.capacities):
        field = bits[position: position + width_i]
        token = int(field, 2) if width_i else 0
        if token >= capacity:
            raise CorruptionError(f"Decoded token {token} exceeds capacity {capacity}")
        tokens.append(token)
        position += width_i
    return TokenFrame.from_list(tokens, cfg)


class BitWriter:
    """MSB-first bit accumulator"""

    def __init__(self):
        self._buffer = bytearray()
        self._bits = 0
        self._count = 0

    def write_bits(self, value, nbits):
        self._bits = (self._bits << nbits) | (value & ((1 << nbits) - 1))
        self._count += nbits
        while self._count >= 8:
            self._count -= 8
            self._buffer.append((self._bits >> self._count) & 0xFF)
        self._bits &= (1 << self._count) - 1

    def take_bytes(self):
        """Completed bytes written since the last call"""
        data = bytes(self._buffer)
        self._buffer.clear()
        return data

    def flush(self):
        if self._count:
            self._buffer.append((self._bits << (8 - self._count)) & 0xFF)
            self._bits = 0
            self._count = 0
        return self.take_bytes()


class BitReader:
    def __init__(self, data):
        self._data = data
        self._position = 0

    @property
    def bits_left(self):
        return 8 * len(self._data) - self._position

    def read_bits(self, nbits):
        if nbits > self.bits_left:
            raise StreamError("Bitstream payload is truncated")
        value = 0
        for _ in range(nbits):
            byte = self._data[self._position >> 3]
            value = (value << 1) | ((byte >> (7 - (self._position & 7))) & 1)
            self._position += 1
        return value


class StreamWriter:
    """Writes a header and then frames to a binary file object.

    The header starts with the streaming frame-count sentinel; close()
    patches the real count when the file object is seekable and otherwise
    appends it as a 4-byte trailer after the padded payload.
    """

    def __init__(self, fileobj, header: StreamHeader):
        self.fileobj = fileobj
        self.header = replace(header, frame_count=None)
        self.widths = token_widths(header.schedule)
        self.frames_written = 0
        self._writer = BitWriter()
        self._start = fileobj.tell() if fileobj.seekable() else None
        fileobj.write(self.header.to_bytes())

    def write_frame(self, tokens):
        cfg = self.header.schedule
        if not isinstance(tokens, TokenFrame):
            tokens = TokenFrame.from_list(tokens, cfg)
        tokens.validate(cfg)
        for token, width in zip(tokens.as_list(), self.widths):
            self._writer.write_bits(token, width)
        self.fileobj.write(self._writer.take_bytes())
        self.frames_written += 1

    def write_frames(self, tokens):
        for frame in torch.as_tensor(tokens, dtype=torch.long).reshape(
            -1, self.header.schedule.num_stages
        ):
            self.write_frame(frame.tolist())

    def close(self):
        self.fileobj.write(self._writer.flush())
        if self._start is not None:
            end = self.fileobj.tell()
            self.fileobj.seek(self._start)
            self.fileobj.write(
                replace(self.header, frame_count=self.frames_written).to_bytes()
            )
            self.fileobj.seek(end)
        else:
            self.fileobj.write(_FRAME_COUNT.pack(self.frames_written))
        return replace(self.header, frame_count=self.frames_written)


def read_stream(fileobj):
    """(header, tokens of shape (frames, N_s + N_v)) from a binary file object"""
    header = StreamHeader.read_from(fileobj)
    cfg = header.schedule
    payload = fileobj.read()
    widths = token_widths(cfg)
    width = sum(widths)
    if header.frame_count is None:
        if len(payload) < _FRAME_COUNT.size:
            raise StreamError("Streamed bitstream is missing its frame-count trailer")
        (frame_count,) = _FRAME_COUNT.unpack(payload[-_FRAME_COUNT.size:])
        payload = payload[: -_FRAME_COUNT.size]
        if len(payload) != (frame_count * width + 7) // 8:
            raise CorruptionError(
                f"Trailer announces {frame_count} frames but the payload "
                f"holds {len(payload)} bytes"
            )
    else:
        frame_count = header.frame_count
        if frame_count * width > 8 * len(payload):
            raise StreamError(
                f"Header announces {frame_count} frames but the payload is shorter"
            )
    reader = BitReader(payload)
    frames = []
    for _ in range(frame_count):
        frame = []
        for w, capacity in zip(widths, cfg.capacities):
            token = reader.read_bits(w)
            if token >= capacity:
                raise CorruptionError(
                    f"Decoded token {token} exceeds capacity {capacity}"
                )
            frame.append(token)
        frames.append(frame)
    tokens = torch.tensor(frames, dtype=torch.long).reshape(-1, cfg.num_stages)
    return replace(header, frame_count=frame_count), tokens


def write_stream(path, header: StreamHeader, tokens):
    logger = logging.getLogger(__name__)
    with open(path, "wb") as f:
        writer = StreamWriter(f, header)
        writer.write_frames(tokens)
        header = writer.close()
    logger.info(f"Wrote {header.frame_count} frames to {path}")
    return header


def load_stream(path):
    with open(path, "rb") as f:
        return read_stream(f)


def encode_bytes(header: StreamHeader, tokens):
    buffer = io.BytesIO()
    writer = StreamWriter(buffer, header)
    writer.write_frames(tokens)
    writer.close()
    return buffer.getvalue()


def decode_bytes(data):
    return read_stream(io.BytesIO(data))
