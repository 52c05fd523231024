"""Frame encapsulation and layer-by-layer receive verification.

Wire layout: SYNC | PH | DH | CRC | NH | TH | AH | PAYLOAD, zero-padded at
the end to a multiple of log2(M) bits for symbol mapping. SYNC/PH/DH/NH
carry no live semantics in the simulator; they are deterministic
pseudorandom patterns derived from the config seed and verified by
comparison against the transmitted reference. The transport header and the
DH CRC are genuine computed values, so checksum/CRC false-pass events occur
through real arithmetic rather than coin flips.

Receive checks run in wire order and the first failure wins; a delivered
payload is returned verbatim, corrupt bits included, when the protocol is
SITP.
"""

import math
import struct
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bits import as_bits, bits_from_int
from .integrity import (PseudoHeader, SitpHeader, checksum_valid,
                        complement_checksum, compute_sitp_checksum,
                        crc32_bytes, sync_detect)
from .rng import TAG_FIELD_PATTERN, substream

FIELD_ORDER = ("SYNC", "PH", "DH", "CRC", "NH", "TH", "AH", "PAYLOAD")

PROTOCOL_IDS = {"SITP": 0x99, "UDP": 17, "TCP": 6}

# Real TCP keeps its checksum in bytes 16-17 of the header.
TCP_CHECKSUM_BIT_OFFSET = 128


class DropCause(Enum):
    """First verification failure for a received frame; NONE means delivered."""

    NONE = "none"
    SYNC_FAIL = "sync_fail"
    PHY_HEADER_FAIL = "ph_fail"
    DATALINK_CRC_FAIL = "dalink_crc_fail"
    NET_HEADER_FAIL = "net_fail"
    TRANSPORT_CHECKSUM_FAIL = "transport_fail"
    APP_HEADER_FAIL = "app_fail"


@dataclass(frozen=True)
class AppHeader:
    """24-bit application header: group id, image index, packet sequence."""

    group_id: int
    image_index: int
    packet_seq: int

    def to_bits(self):
        return np.concatenate([bits_from_int(self.group_id, 8),
                               bits_from_int(self.image_index, 4),
                               bits_from_int(self.packet_seq, 12)])


@dataclass(frozen=True)
class Addressing:
    """Endpoint identity folded into the transport checksum."""

    source_addr: int = 0x0A000001
    dest_addr: int = 0x0A000002
    source_port: int = 0x1F90
    dest_port: int = 0x1F91


DEFAULT_ADDRESSING = Addressing()


@dataclass(frozen=True)
class Frame:
    """One on-air packet: flat bit vector plus named field offsets.

    Carries the pseudo-header and protocol so a receiver holding the
    transmitted reference has everything needed for verification.
    """

    bits: np.ndarray
    layout: dict
    pseudo: PseudoHeader
    protocol: str

    def field(self, name):
        offset, length = self.layout[name]
        return self.bits[offset:offset + length]


def frame_layout(cfg):
    """(layout, padded total bits) for a stack config."""
    lengths = {
        "SYNC": cfg.sync_len_bits,
        "PH": cfg.ph_len_bits,
        "DH": cfg.dh_len_bits,
        "CRC": cfg.crc_width_bits,
        "NH": cfg.nh_len_bits,
        "TH": cfg.th_len_bits,
        "AH": cfg.ah_len_bits,
        "PAYLOAD": cfg.payload_len_bits,
    }
    layout = {}
    offset = 0
    for name in FIELD_ORDER:
        layout[name] = (offset, lengths[name])
        offset += lengths[name]
    bits_per_symbol = int(math.log2(cfg.modulation_order))
    total = offset + (-offset) % bits_per_symbol
    return layout, total


_pattern_cache = {}


def field_pattern(cfg, name):
    """Deterministic pseudorandom pattern for a reference-checked field.

    Returned arrays are shared and read-only; copy before mutating.
    """
    index = FIELD_ORDER.index(name)
    length = frame_layout(cfg)[0][name][1]
    key = (cfg.rng_seed, index, length)
    pattern = _pattern_cache.get(key)
    if pattern is None:
        rng = substream(cfg.rng_seed, TAG_FIELD_PATTERN, index)
        pattern = rng.integers(0, 2, size=length, dtype=np.uint8)
        pattern.flags.writeable = False
        _pattern_cache[key] = pattern
    return pattern


def segment_length_bytes(cfg):
    """Transport segment length (TH + AH + payload) in bytes, rounded up."""
    return (cfg.th_len_bits + cfg.ah_len_bits + cfg.payload_len_bits + 7) // 8


def _check_framing_support(cfg):
    if cfg.protocol in ("SITP", "UDP") and cfg.th_len_bits != 64:
        raise ValueError(
            f"{cfg.protocol} framing requires th_len_bits=64, "
            f"got {cfg.th_len_bits}")
    if cfg.protocol == "TCP" and cfg.th_len_bits < TCP_CHECKSUM_BIT_OFFSET + 16:
        raise ValueError(
            f"TCP framing requires th_len_bits >= {TCP_CHECKSUM_BIT_OFFSET + 16}, "
            f"got {cfg.th_len_bits}")
    if cfg.ah_len_bits != 24:
        raise ValueError(
            f"framing requires ah_len_bits=24, got {cfg.ah_len_bits}")


def _coverage_checksum(pseudo, coverage_bits):
    """Full-coverage checksum over pseudo-header + packed segment bits."""
    return complement_checksum(pseudo.to_bytes()
                               + np.packbits(coverage_bits).tobytes())


def _build_transport_header(cfg, addressing, pseudo, ah_bits, payload):
    if cfg.protocol == "SITP":
        header = SitpHeader(addressing.source_port, addressing.dest_port,
                            pseudo.sitp_length)
        return header.with_checksum(compute_sitp_checksum(header, pseudo)).to_bits()

    if cfg.protocol == "UDP":
        header = SitpHeader(addressing.source_port, addressing.dest_port,
                            pseudo.sitp_length)  # UDP shares the 8-byte shape
        th_bits = header.to_bits()
        coverage = np.concatenate([th_bits, ah_bits, payload])
        cksum = _coverage_checksum(pseudo, coverage)
        th_bits[48:64] = bits_from_int(cksum, 16)
        return th_bits

    # TCP: pattern header with real ports in front and a full-coverage
    # checksum at the fixed offset; remaining fields stay pattern bits.
    th_bits = field_pattern(cfg, "TH").copy()
    th_bits[0:16] = bits_from_int(addressing.source_port, 16)
    th_bits[16:32] = bits_from_int(addressing.dest_port, 16)
    th_bits[TCP_CHECKSUM_BIT_OFFSET:TCP_CHECKSUM_BIT_OFFSET + 16] = 0
    coverage = np.concatenate([th_bits, ah_bits, payload])
    cksum = _coverage_checksum(pseudo, coverage)
    th_bits[TCP_CHECKSUM_BIT_OFFSET:TCP_CHECKSUM_BIT_OFFSET + 16] = \
        bits_from_int(cksum, 16)
    return th_bits


def encapsulate(payload, app_header, cfg, addressing=DEFAULT_ADDRESSING):
    """Wrap payload bits into a complete frame for the configured protocol."""
    _check_framing_support(cfg)
    payload = as_bits(payload)
    if payload.size != cfg.payload_len_bits:
        raise ValueError(f"payload must be {cfg.payload_len_bits} bits, "
                         f"got {payload.size}")
    layout, total = frame_layout(cfg)
    pseudo = PseudoHeader(addressing.source_addr, addressing.dest_addr,
                          PROTOCOL_IDS[cfg.protocol], segment_length_bytes(cfg))
    ah_bits = app_header.to_bits()
    dh_bits = field_pattern(cfg, "DH")
    crc_bits = bits_from_int(crc32_bytes(np.packbits(dh_bits).tobytes()), 32)

    bits = np.zeros(total, dtype=np.uint8)
    pieces = {
        "SYNC": field_pattern(cfg, "SYNC"),
        "PH": field_pattern(cfg, "PH"),
        "DH": dh_bits,
        "CRC": crc_bits,
        "NH": field_pattern(cfg, "NH"),
        "TH": _build_transport_header(cfg, addressing, pseudo, ah_bits, payload),
        "AH": ah_bits,
        "PAYLOAD": payload,
    }
    for name in FIELD_ORDER:
        offset, length = layout[name]
        bits[offset:offset + length] = pieces[name]
    return Frame(bits=bits, layout=layout, pseudo=pseudo, protocol=cfg.protocol)


def _transport_ok(received, cfg, reference):
    th_off, th_len = reference.layout["TH"]
    if cfg.protocol == "SITP":
        # Header-only verification: AH and payload are never checked here.
        header_bytes = np.packbits(received[th_off:th_off + th_len]).tobytes()
        return checksum_valid(reference.pseudo.to_bytes() + header_bytes)
    pay_off, pay_len = reference.layout["PAYLOAD"]
    coverage = received[th_off:pay_off + pay_len]
    return checksum_valid(reference.pseudo.to_bytes()
                          + np.packbits(coverage).tobytes())


def decapsulate(frame_bits, cfg, reference):
    """Run receive-side verification; first failing layer wins.

    Returns (payload, DropCause.NONE) on delivery or (None, cause) on drop.
    The DH check recomputes the CRC of the received DH and compares it with
    the CRC of the reference DH: the DH is a known pattern, so its CRC is
    known side information, and corruption of the transmitted CRC field
    itself (which no layer covers) cannot cause a spurious drop.
    """
    received = as_bits(frame_bits)
    if received.size != reference.bits.size:
        raise ValueError(f"frame length {received.size} != reference "
                         f"{reference.bits.size}")
    layout = reference.layout

    def rx(name):
        offset, length = layout[name]
        return received[offset:offset + length]

    if not sync_detect(rx("SYNC"), reference.field("SYNC"), cfg.sync_tolerance):
        return None, DropCause.SYNC_FAIL
    if not np.array_equal(rx("PH"), reference.field("PH")):
        return None, DropCause.PHY_HEADER_FAIL
    rx_dh_crc = crc32_bytes(np.packbits(rx("DH")).tobytes())
    ref_crc = crc32_bytes(np.packbits(reference.field("DH")).tobytes())
    if rx_dh_crc != ref_crc:
        return None, DropCause.DATALINK_CRC_FAIL
    if not np.array_equal(rx("NH"), reference.field("NH")):
        return None, DropCause.NET_HEADER_FAIL
    if not _transport_ok(received, cfg, reference):
        return None, DropCause.TRANSPORT_CHECKSUM_FAIL
    if not np.array_equal(rx("AH"), reference.field("AH")):
        return None, DropCause.APP_HEADER_FAIL
    return rx("PAYLOAD").copy(), DropCause.NONE


def classify_loss(frames_in, frames_out, cfg):
    """Per-cause drop histogram over transmitted/received frame pairs."""
    if len(frames_in) != len(frames_out):
        raise ValueError("frames_in and frames_out must pair up")
    counts = Counter({cause: 0 for cause in DropCause})
    for reference, received in zip(frames_in, frames_out):
        _, cause = decapsulate(received, cfg, reference)
        counts[cause] += 1
    return counts


def write_frames(path, frames):
    """Dump frames as length-prefixed packed bit strings (golden-file format).

    Each record: 32-bit big-endian bit count, then the bits packed MSB-first
    with the final byte zero-padded.
    """
    with open(path, "wb") as fh:
        for frame in frames:
            bits = frame.bits if isinstance(frame, Frame) else as_bits(frame)
            fh.write(struct.pack(">I", bits.size))
            fh.write(np.packbits(bits).tobytes())


def read_frames(path):
    """Read bit vectors from the dump format written by write_frames."""
    out = []
    with open(path, "rb") as fh:
        while True:
            prefix = fh.read(4)
            if not prefix:
                return out
            if len(prefix) != 4:
                raise ValueError("truncated record length prefix")
            (nbits,) = struct.unpack(">I", prefix)
            nbytes = (nbits + 7) // 8
            packed = fh.read(nbytes)
            if len(packed) != nbytes:
                raise ValueError("truncated frame record")
            out.append(np.unpackbits(
                np.frombuffer(packed, dtype=np.uint8))[:nbits].copy())
