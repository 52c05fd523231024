"""Bit-level integrity primitives.

One's-complement checksum with pseudo-header coverage for the transport
header, CRC-32 for the data-link header, and threshold sync-word detection.
All functions are pure.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .bits import as_bits, bits_from_bytes, hamming_distance

SITP_HEADER_BITS = 64
PSEUDO_HEADER_BYTES = 12


@dataclass(frozen=True)
class SitpHeader:
    """8-byte transport header: ports, total length, header checksum.

    total_length counts the bytes of transport header + app header + payload.
    Serialization is big-endian in field order.
    """

    source_port: int
    dest_port: int
    total_length: int
    checksum: int = 0

    def to_bytes(self):
        return struct.pack(">HHHH", self.source_port, self.dest_port,
                           self.total_length, self.checksum)

    def to_bits(self):
        return bits_from_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data):
        if len(data) != 8:
            raise ValueError(f"SITP header is 8 bytes, got {len(data)}")
        src, dst, length, cksum = struct.unpack(">HHHH", data)
        return cls(src, dst, length, cksum)

    def with_checksum(self, value):
        return replace(self, checksum=value)


@dataclass(frozen=True)
class PseudoHeader:
    """12-byte checksum-only context (addresses, protocol id, length).

    Included in checksum computation but never transmitted on the wire.
    """

    source_addr: int
    dest_addr: int
    protocol_id: int
    sitp_length: int

    def to_bytes(self):
        # zero pad byte sits between the addresses and the protocol id
        return struct.pack(">IIBBH", self.source_addr, self.dest_addr,
                           0, self.protocol_id, self.sitp_length)


def ones_complement_sum(data):
    """End-around-carry one's-complement sum of 16-bit big-endian words.

    Odd-length input is zero-padded on the right. The empty sum is 0.
    """
    data = bytes(data)
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def complement_checksum(data):
    """One's-complement of the one's-complement sum, with zero avoidance.

    A computed value of 0x0000 is transmitted as 0xFFFF (the two are
    equivalent under one's-complement addition, so verification still holds).
    """
    value = (~ones_complement_sum(data)) & 0xFFFF
    return 0xFFFF if value == 0 else value


def compute_sitp_checksum(header, pseudo):
    """Checksum over pseudo-header + SITP header (checksum field zeroed)."""
    if header.checksum != 0:
        header = header.with_checksum(0)
    return complement_checksum(pseudo.to_bytes() + header.to_bytes())


def checksum_valid(data):
    """True iff a filled-in checksum region folds to 0xFFFF (complement 0)."""
    return ones_complement_sum(data) == 0xFFFF


def verify_sitp_header(header_bits, pseudo):
    """Validate a received 64-bit transport header against its pseudo-header.

    True iff the one's-complement sum over pseudo + header (checksum field
    included) equals 0xFFFF, i.e. its complement is zero.
    """
    header_bits = as_bits(header_bits)
    if header_bits.size != SITP_HEADER_BITS:
        raise ValueError(f"expected {SITP_HEADER_BITS} header bits, "
                         f"got {header_bits.size}")
    header_bytes = np.packbits(header_bits).tobytes()
    return checksum_valid(pseudo.to_bytes() + header_bytes)


# CRC-32: reflected, polynomial 0x04C11DB7, init all-ones, final xor all-ones
# (the ubiquitous IEEE 802.3 parameterization; check value 0xCBF43926).
_CRC32_POLY_REFLECTED = 0xEDB88320


def _make_crc32_table():
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC32_POLY_REFLECTED if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC32_TABLE = _make_crc32_table()


def crc32_bytes(data):
    """CRC-32 of a byte string, as an integer."""
    crc = 0xFFFFFFFF
    for byte in bytes(data):
        crc = (crc >> 8) ^ _CRC32_TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFFFFFF


class UnsupportedCrcWidth(ValueError):
    pass


def crc_compute(data_bits, width=32):
    """CRC over a bit vector, returned as a `width`-bit big-endian bit vector.

    Only width 32 is implemented. Inputs whose length is not a byte multiple
    are zero-padded on the right before the byte-wise CRC.
    """
    if width != 32:
        raise UnsupportedCrcWidth(f"only CRC-32 is supported, got width {width}")
    data_bits = as_bits(data_bits)
    value = crc32_bytes(np.packbits(data_bits).tobytes() if data_bits.size else b"")
    return bits_from_bytes(struct.pack(">I", value))


def sync_detect(received, reference, tolerance):
    """True iff Hamming distance(received, reference) <= tolerance."""
    return hamming_distance(received, reference) <= tolerance
