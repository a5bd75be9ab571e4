"""Classic pcap reading/writing and TCP session reassembly.

Only metadata is kept: addresses, ports, flags, sequence numbers and sizes.
Payload bytes are never stored.
"""

from __future__ import annotations

import enum
import io
import socket
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, NamedTuple, Sequence

from .errors import PcapFormatError, UnsupportedFormatError

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_SWAPPED = 0xD4C3B2A1
PCAP_MAGIC_NANO = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100
IPPROTO_TCP = 6

DEFAULT_IDLE_TIMEOUT = 300.0

ETH_HEADER_LEN = 14
IPV4_HEADER_LEN = 20
TCP_HEADER_LEN = 20
FRAME_OVERHEAD = ETH_HEADER_LEN + IPV4_HEADER_LEN + TCP_HEADER_LEN

_SEQ_MOD = 1 << 32


class TcpFlag(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20


FLAG_MASK = 0x3F

# plain-int copies for hot loops; IntFlag arithmetic is slow
FIN, SYN, RST, PSH, ACK, URG = 0x01, 0x02, 0x04, 0x08, 0x10, 0x20


class Anomaly(str, enum.Enum):
    DUPLICATE_ACK = "duplicate_ack"
    KEEP_ALIVE = "keep_alive"
    LOST_SEGMENT = "lost_segment"
    OUT_OF_ORDER = "out_of_order"


class Direction(enum.IntEnum):
    A_TO_B = 0
    B_TO_A = 1


_DIRECTIONS = (Direction.A_TO_B, Direction.B_TO_A)


def as_directions(dirs: Iterable[int]) -> tuple:
    return tuple(_DIRECTIONS[d] for d in dirs)


class Termination(str, enum.Enum):
    FIN = "fin"
    RST = "rst"
    TIMEOUT = "timeout"
    CAPTURE_END = "capture_end"


@dataclass(frozen=True, slots=True)
class Packet:
    """One TCP segment's metadata.

    ``timestamp`` is seconds since the epoch at microsecond resolution; use
    :attr:`micros` for exact arithmetic.
    """

    timestamp: float
    src: str
    sport: int
    dst: str
    dport: int
    flags: int
    seq: int
    ack: int
    payload_len: int
    wire_len: int
    ds_field: int = 0
    anomalies: frozenset = field(default=frozenset())

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if self.payload_len > self.wire_len:
            raise ValueError("payload_len exceeds wire_len")

    @property
    def micros(self) -> int:
        return round(self.timestamp * 1_000_000)

    def has(self, flag: TcpFlag) -> bool:
        return bool(self.flags & flag)


@dataclass(frozen=True)
class TcpSession:
    """A directed TCP conversation. Side A sent the first SYN (or, if no SYN
    was observed, the first packet)."""

    key: tuple  # (addr_A, port_A, addr_B, port_B)
    packets: tuple
    directions: tuple
    termination: Termination = Termination.CAPTURE_END

    @property
    def start_time(self) -> float:
        return self.packets[0].timestamp

    @property
    def end_time(self) -> float:
        return self.packets[-1].timestamp

    @property
    def endpoint_a(self) -> tuple:
        return self.key[0], self.key[1]

    @property
    def endpoint_b(self) -> tuple:
        return self.key[2], self.key[3]

    def __len__(self) -> int:
        return len(self.packets)


class ParsedCapture(NamedTuple):
    packets: list
    skipped: int


# --------------------------------------------------------------------------
# pcap reading


def _parse_global_header(raw: bytes) -> tuple[str, int]:
    if len(raw) < 24:
        raise PcapFormatError(f"pcap global header truncated: {len(raw)} of 24 bytes")
    magic_le = struct.unpack_from("<I", raw, 0)[0]
    if magic_le == PCAP_MAGIC:
        endian = "<"
    elif magic_le == PCAP_MAGIC_SWAPPED:
        endian = ">"
    elif magic_le in (PCAP_MAGIC_NANO, 0x4D3CB2A1):
        raise UnsupportedFormatError("nanosecond-resolution pcap is not supported")
    elif magic_le == PCAPNG_MAGIC:
        raise UnsupportedFormatError("pcapng is not supported; convert to classic pcap")
    else:
        raise PcapFormatError(f"bad pcap magic 0x{magic_le:08x}")
    linktype = struct.unpack_from(endian + "I", raw, 20)[0]
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedFormatError(f"unsupported link type {linktype} (need Ethernet)")
    return endian, linktype


def _decode_frame(frame: bytes, ts_sec: int, ts_usec: int, orig_len: int) -> Packet | None:
    if len(frame) < ETH_HEADER_LEN:
        return None
    off = 12
    ethertype = (frame[off] << 8) | frame[off + 1]
    off = ETH_HEADER_LEN
    if ethertype == ETH_VLAN:
        if len(frame) < off + 4:
            return None
        ethertype = (frame[off + 2] << 8) | frame[off + 3]
        off += 4
    if ethertype != ETH_IPV4 or len(frame) < off + IPV4_HEADER_LEN:
        return None
    ver_ihl = frame[off]
    if ver_ihl >> 4 != 4:
        return None
    ihl = (ver_ihl & 0x0F) * 4
    tos = frame[off + 1]
    total_len = (frame[off + 2] << 8) | frame[off + 3]
    frag = ((frame[off + 6] << 8) | frame[off + 7]) & 0x1FFF
    proto = frame[off + 9]
    if proto != IPPROTO_TCP or frag != 0 or ihl < IPV4_HEADER_LEN:
        return None
    src = socket.inet_ntoa(frame[off + 12:off + 16])
    dst = socket.inet_ntoa(frame[off + 16:off + 20])
    t = off + ihl
    if len(frame) < t + TCP_HEADER_LEN:
        return None
    sport, dport, seq, ack, data_off, flags = struct.unpack_from("!HHIIBB", frame, t)
    tcp_len = (data_off >> 4) * 4
    payload = max(0, total_len - ihl - tcp_len)
    payload = min(payload, orig_len)
    return Packet(
        timestamp=(ts_sec * 1_000_000 + ts_usec) / 1_000_000,
        src=src,
        sport=sport,
        dst=dst,
        dport=dport,
        flags=flags & FLAG_MASK,
        seq=seq,
        ack=ack,
        payload_len=payload,
        wire_len=orig_len,
        ds_field=tos,
    )


def parse_pcap(raw: bytes) -> ParsedCapture:
    """Decode every TCP-over-IPv4 frame of a classic Ethernet pcap.

    Frames that are not TCP/IPv4 (IPv6, ARP, UDP, IP fragments, frames too
    short to hold the headers) are counted in ``skipped``.
    """
    endian, _ = _parse_global_header(raw)
    rec = struct.Struct(endian + "IIII")
    packets: list[Packet] = []
    skipped = 0
    off = 24
    index = 0
    end = len(raw)
    while off < end:
        if end - off < rec.size:
            raise PcapFormatError(
                f"record {index} header truncated at byte offset {off}"
            )
        ts_sec, ts_usec, incl_len, orig_len = rec.unpack_from(raw, off)
        body = off + rec.size
        if end - body < incl_len:
            raise PcapFormatError(
                f"record {index} truncated at byte offset {off}: "
                f"need {incl_len} bytes, have {end - body}"
            )
        pkt = _decode_frame(raw[body:body + incl_len], ts_sec, ts_usec, max(orig_len, incl_len))
        if pkt is None:
            skipped += 1
        else:
            packets.append(pkt)
        off = body + incl_len
        index += 1
    return ParsedCapture(packets, skipped)


def read_pcap(path) -> ParsedCapture:
    return parse_pcap(Path(path).read_bytes())


# --------------------------------------------------------------------------
# pcap writing


def _mac(ip: bytes) -> bytes:
    return b"\x02\x00" + ip


def _ip_checksum(header: bytes) -> int:
    total = sum(struct.unpack("!10H", header))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def encode_frame(p: Packet) -> bytes:
    """Ethernet + IPv4 + 20-byte TCP header, zero-filled payload."""
    src = socket.inet_aton(p.src)
    dst = socket.inet_aton(p.dst)
    total_len = IPV4_HEADER_LEN + TCP_HEADER_LEN + p.payload_len
    ip = bytearray(struct.pack(
        "!BBHHHBBH4s4s", 0x45, p.ds_field, total_len, 0, 0x4000, 64, IPPROTO_TCP, 0, src, dst
    ))
    struct.pack_into("!H", ip, 10, _ip_checksum(bytes(ip)))
    tcp = struct.pack(
        "!HHIIBBHHH", p.sport, p.dport, p.seq, p.ack, (TCP_HEADER_LEN // 4) << 4,
        p.flags & FLAG_MASK, 65535, 0, 0,
    )
    return _mac(dst) + _mac(src) + struct.pack("!H", ETH_IPV4) + bytes(ip) + tcp + bytes(p.payload_len)


def write_pcap(packets: Iterable[Packet], dest: str | Path | BinaryIO) -> int:
    """Write packets as a little-endian microsecond pcap. Returns the count."""
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            return write_pcap(packets, fh)
    dest.write(struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 262144, LINKTYPE_ETHERNET))
    n = 0
    for p in packets:
        frame = encode_frame(p)
        sec, usec = divmod(p.micros, 1_000_000)
        dest.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
        dest.write(frame)
        n += 1
    return n


def pcap_bytes(packets: Iterable[Packet]) -> bytes:
    buf = io.BytesIO()
    write_pcap(packets, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# anomaly flags


def _seq_lt(a: int, b: int) -> bool:
    return ((a - b) % _SEQ_MOD) > 0x7FFFFFFF


def annotate_anomalies(packets: Sequence[Packet], directions: Sequence[int]) -> tuple:
    """Return packets with ``anomalies`` recomputed.

    Tracking is per direction: the next expected sequence number and the last
    acknowledgement number seen.
    """
    nxt: list = [None, None]
    last_ack: list = [None, None]
    out = []
    for p, d in zip(packets, directions):
        found = set()
        f = p.flags
        syn_fin = f & (SYN | FIN)
        rst = f & RST
        seglen = p.payload_len + (1 if f & SYN else 0) + (1 if f & FIN else 0)
        expected = nxt[d]
        if expected is not None and not rst:
            if p.payload_len <= 1 and not syn_fin and p.seq == (expected - 1) % _SEQ_MOD:
                found.add(Anomaly.KEEP_ALIVE.value)
            elif seglen > 0 and _seq_lt(expected, p.seq):
                found.add(Anomaly.LOST_SEGMENT.value)
            elif seglen > 0 and _seq_lt(p.seq, expected):
                found.add(Anomaly.OUT_OF_ORDER.value)
        if (
            f & ACK
            and p.payload_len == 0
            and not syn_fin
            and not rst
            and Anomaly.KEEP_ALIVE.value not in found
            and last_ack[d] is not None
            and p.ack == last_ack[d]
        ):
            found.add(Anomaly.DUPLICATE_ACK.value)
        if not rst:
            end = (p.seq + seglen) % _SEQ_MOD
            if expected is None or _seq_lt(expected, end):
                nxt[d] = end
        if f & ACK:
            last_ack[d] = p.ack
        anomalies = frozenset(found)
        out.append(p if anomalies == p.anomalies else replace(p, anomalies=anomalies))
    return tuple(out)


# --------------------------------------------------------------------------
# reassembly


class _Builder:
    __slots__ = ("a", "b", "packets", "dirs", "last_ts", "syn_seen", "isn", "fin", "rst", "order")

    def __init__(self, a, b, syn_isn, order):
        self.a = a
        self.b = b
        self.packets = []
        self.dirs = []
        self.last_ts = None
        self.syn_seen = syn_isn is not None
        self.isn = syn_isn
        self.fin = [False, False]
        self.rst = False
        self.order = order

    @property
    def closed(self) -> bool:
        return self.rst or all(self.fin)

    def add(self, p: Packet, d: int) -> None:
        self.packets.append(p)
        self.dirs.append(d)
        self.last_ts = p.timestamp
        if p.flags & FIN:
            self.fin[d] = True
        if p.flags & RST:
            self.rst = True

    def build(self, fallback: Termination) -> tuple:
        if all(self.fin):
            term = Termination.FIN
        elif self.rst:
            term = Termination.RST
        else:
            term = fallback
        dirs = as_directions(self.dirs)
        session = TcpSession(
            key=(self.a[0], self.a[1], self.b[0], self.b[1]),
            packets=annotate_anomalies(self.packets, self.dirs),
            directions=dirs,
            termination=term,
        )
        return (session.start_time, self.order), session


def reassemble_sessions(
    packets: Iterable[Packet], idle_timeout: float = DEFAULT_IDLE_TIMEOUT
) -> list[TcpSession]:
    """Group packets into directed sessions, ordered by start time.

    A session stays open on its 4-tuple until idle_timeout of silence or a new
    SYN (a retransmitted SYN with the same ISN from the same side is kept).
    Packets after the closing FINs (the final ACK) stay with their session.
    A session displaced by a new SYN before it closed is marked ``timeout``.
    """
    active: dict = {}
    done: list = []
    counter = 0
    for p in packets:
        src = (p.src, p.sport)
        dst = (p.dst, p.dport)
        canon = (src, dst) if src <= dst else (dst, src)
        is_syn = (p.flags & (SYN | ACK)) == SYN
        b = active.get(canon)
        if b is not None:
            if p.timestamp - b.last_ts > idle_timeout:
                done.append(b.build(Termination.TIMEOUT))
                b = None
            elif is_syn and not (
                b.syn_seen and not b.closed and src == b.a and p.seq == b.isn
            ):
                done.append(b.build(Termination.TIMEOUT))
                b = None
        if b is None:
            b = _Builder(src, dst, p.seq if is_syn else None, counter)
            counter += 1
            active[canon] = b
        b.add(p, Direction.A_TO_B if src == b.a else Direction.B_TO_A)
    for b in active.values():
        done.append(b.build(Termination.CAPTURE_END))
    done.sort(key=lambda item: item[0])
    return [s for _, s in done]


def sessions_from_pcap(path, idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> list[TcpSession]:
    return reassemble_sessions(read_pcap(path).packets, idle_timeout)
