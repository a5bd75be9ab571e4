"""Seeded generator of labeled printer-protocol TCP sessions.

Benign traffic has three shapes:

* print jobs: a client streams a document to port 9100 and the printer
  answers with ACKs and a few short status messages,
* status polls: short queries answered by short, fast status replies,
* printer-initiated uploads (notifications, scan-to-server), where the
  printer sits on side A.

Malicious sessions replay exploitation-toolkit commands: each command is a
request followed, after printer-side processing time, by a response whose
size depends on the command (file and memory leaks return a lot).

Default sizes, delays and mixture weights are tuned to the aggregate
behaviour reported for the real recordings: about 70% of benign sessions
have a received/sent byte ratio below 0.38, ~98.7% of benign sessions have
every printer payload under 50 bytes, the printer is the responder in at
least 98% of sessions, and only ~9% of malicious sessions keep every
printer payload under 50 bytes. Per-command ranges beyond the two reported
data points (the 528-byte `id` request and its 485-byte answer) are
extrapolations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .capture import (
    ACK,
    FIN,
    FRAME_OVERHEAD,
    PSH,
    SYN,
    Packet,
    TcpSession,
    Termination,
    annotate_anomalies,
    as_directions,
    write_pcap,
)
from .dataset import BENIGN, MALICIOUS, Dataset, SessionMeta
from .errors import ArgumentError
from .features import extract_matrix

RAW_PORT = 9100
EPOCH_2016_07_01 = 1_467_331_200

_ACK = ACK
_PSH_ACK = PSH | ACK


# --------------------------------------------------------------------------
# command bank


@dataclass(frozen=True)
class Command:
    name: str
    language: str  # general, PJL, PostScript, PCL
    request_range: tuple
    response_range: tuple
    delay_range: tuple  # seconds the printer spends before answering


# response classes
_LEAK = ((600, 24000), (0.08, 2.5))
_INFO = ((120, 1800), (0.05, 0.8))
_QUIET = ((0, 45), (0.04, 0.5))

# request sizes per language
_REQ = {"general": (80, 420), "PJL": (40, 220), "PostScript": (180, 1400), "PCL": (30, 120)}

_TABLE = {
    "general": [
        ("ls", _LEAK), ("get", _LEAK), ("find", _LEAK), ("cat", _LEAK), ("cd", _QUIET),
        ("pwd", _QUIET), ("chvol", _QUIET), ("traversal", _LEAK), ("fuzz path", _INFO),
        ("fuzz blind", _INFO), ("mirror", _LEAK), ("df", _INFO), ("free", _QUIET),
        ("put", _QUIET), ("append", _QUIET), ("delete", _QUIET), ("rename", _QUIET),
        ("edit", _LEAK), ("touch", _QUIET), ("mkdir", _QUIET), ("fuzz write", _INFO),
    ],
    "PJL": [
        ("id", _INFO), ("version", _INFO), ("printenv", _INFO), ("env", _LEAK),
        ("nvramp dump", _LEAK), ("nvramp read", _INFO), ('info "xyz"', _INFO),
        ("restart", _QUIET), ("status", _INFO), ("pagecount", _QUIET), ("set", _QUIET),
        ("display", _QUIET), ("offline", _QUIET), ("reset", _QUIET), ("selftest", _QUIET),
        ("flood", _QUIET), ("lock", _QUIET), ("unlock", _QUIET), ("hold", _QUIET),
        ("nvramp write", _QUIET),
    ],
    "PostScript": [
        ("id", _INFO), ("version", _INFO), ("devices", _INFO), ("uptime", _QUIET),
        ("date", _QUIET), ("pagecount", _QUIET), ("known", _INFO), ("search", _LEAK),
        ("dicts", _LEAK), ("resource", _LEAK), ("dump", _LEAK), ("restart", _QUIET),
        ("overlay", _QUIET), ("cross", _QUIET), ("replace", _QUIET), ("capture", _LEAK),
        ("hold", _QUIET), ("set", _QUIET), ("lock", _QUIET), ("unlock", _QUIET),
        ("reset", _QUIET), ("config", _INFO),
    ],
    "PCL": [
        ("info fonts", _LEAK), ("info macros", _INFO), ("info patterns", _INFO),
        ("info symbols", _LEAK), ("info extended", _INFO),
    ],
}

# commands whose request carries bulk data
_REQUEST_OVERRIDES = {
    ("PJL", "id"): (520, 536),
    ("PJL", "flood"): (8000, 40000),
    ("general", "put"): (400, 16000),
    ("general", "append"): (200, 4000),
    ("general", "fuzz write"): (300, 3000),
}
_RESPONSE_OVERRIDES = {
    ("PJL", "id"): (478, 492),
}


def _default_commands() -> tuple:
    out = []
    for language, entries in _TABLE.items():
        for name, (response, delay) in entries:
            out.append(Command(
                name=name,
                language=language,
                request_range=_REQUEST_OVERRIDES.get((language, name), _REQ[language]),
                response_range=_RESPONSE_OVERRIDES.get((language, name), response),
                delay_range=delay,
            ))
    return tuple(out)


@dataclass(frozen=True)
class CommandBank:
    commands: tuple = field(default_factory=_default_commands)

    def __len__(self) -> int:
        return len(self.commands)

    def get(self, language: str, name: str) -> Command:
        for c in self.commands:
            if c.language == language and c.name == name:
                return c
        raise KeyError((language, name))

    def names(self, language: str) -> list[str]:
        return [c.name for c in self.commands if c.language == language]


DEFAULT_BANK = CommandBank()


# --------------------------------------------------------------------------
# configuration


def _printer_pool() -> tuple:
    return tuple(f"10.20.0.{10 + i}" for i in range(12))


def _client_pool() -> tuple:
    return tuple(f"10.10.{i // 50}.{20 + i % 50}" for i in range(120))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_benign: int = 8813
    n_malicious: int = 5500

    # malicious sessions
    commands_per_session_range: tuple = (1, 20)
    sessions_per_printer_range: tuple = (20, 1000)
    single_command_prob: float = 0.1  # attacker uses a fresh session per command
    automated_fraction: float = 0.7
    automated_gap_range: tuple = (0.01, 0.08)
    manual_gap_range: tuple = (0.5, 8.0)
    randomize_order: bool = True
    randomize_grouping: bool = True
    randomize_timing: bool = True

    # benign sessions
    benign_mix: tuple = (0.69, 0.295, 0.015)  # print job, status poll, printer-initiated
    job_size_median: float = 30000.0
    job_size_sigma: float = 1.0
    job_size_bounds: tuple = (2000, 2_000_000)
    reply_ratio_range: tuple = (0.0002, 0.004)
    large_status_prob: float = 0.019
    large_status_range: tuple = (50, 400)
    status_delay_range: tuple = (0.001, 0.04)
    poll_request_range: tuple = (18, 46)
    poll_response_range: tuple = (30, 49)
    poll_delay_range: tuple = (0.0003, 0.015)
    polls_per_session_range: tuple = (1, 3)
    upload_size_range: tuple = (300, 3000)
    page_bytes: int = 20000
    render_pause_prob: float = 0.3  # client pauses between pages while rendering
    render_pause_range: tuple = (0.05, 1.5)

    # network
    printers: tuple = field(default_factory=_printer_pool)
    clients: tuple = field(default_factory=_client_pool)
    servers: tuple = ("10.30.0.5", "10.30.0.6")
    mss: int = 1460
    session_gap_mean: float = 2.0
    start_time: int = EPOCH_2016_07_01
    anomaly_rate: float = 0.0

    def __post_init__(self):
        lo, hi = self.commands_per_session_range
        if not 1 <= lo <= hi <= 20:
            raise ArgumentError(f"commands_per_session_range {self.commands_per_session_range} must lie in [1, 20]")
        if self.n_benign < 0 or self.n_malicious < 0:
            raise ArgumentError("session counts must be non-negative")
        if len(self.benign_mix) != 3 or min(self.benign_mix) < 0 or sum(self.benign_mix) <= 0:
            raise ArgumentError("benign_mix needs three non-negative weights")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ArgumentError(f"unknown SynthConfig keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# TCP conversation builder


class _Conversation:
    """Emits idealized TCP segments (no loss) between side A and side B."""

    def __init__(self, a: tuple, b: tuple, start_us: int, rng: np.random.Generator, mss: int):
        self.ep = (a, b)
        self.now = start_us
        self.rng = rng
        self.mss = mss
        isn = rng.integers(0, 2**32, size=2)
        self.nxt = [int(isn[0]), int(isn[1])]
        self.packets: list = []
        self.dirs: list = []

    def _emit(self, side: int, flags: int, payload: int) -> None:
        src, dst = self.ep[side], self.ep[1 - side]
        self.packets.append(Packet(
            timestamp=self.now / 1_000_000,
            src=src[0], sport=src[1], dst=dst[0], dport=dst[1],
            flags=flags,
            seq=self.nxt[side],
            ack=self.nxt[1 - side] if flags & ACK else 0,
            payload_len=payload,
            wire_len=payload + FRAME_OVERHEAD,
        ))
        self.dirs.append(side)
        seglen = payload + (1 if flags & (SYN | FIN) else 0)
        self.nxt[side] = (self.nxt[side] + seglen) % 2**32

    def wait(self, seconds: float) -> None:
        self.now += max(1, int(round(seconds * 1_000_000)))

    def handshake(self) -> None:
        rtt = self.rng.uniform(0.0002, 0.002)
        self._emit(0, SYN, 0)
        self.wait(rtt / 2)
        self._emit(1, int(SYN | ACK), 0)
        self.wait(rtt / 2)
        self._emit(0, _ACK, 0)

    def send(self, side: int, nbytes: int, ack_every: int = 0) -> None:
        """Send ``nbytes`` as MSS segments; the peer optionally ACKs every
        ``ack_every`` segments and after the last one."""
        if nbytes <= 0:
            return
        n_seg = -(-nbytes // self.mss)
        gaps = self.rng.uniform(0.00002, 0.0003, size=n_seg)
        remaining = nbytes
        for i in range(n_seg):
            if i:
                self.wait(gaps[i])
            size = min(self.mss, remaining)
            remaining -= size
            last = i == n_seg - 1
            self._emit(side, _PSH_ACK if last else _ACK, size)
            if ack_every and ((i + 1) % ack_every == 0 or last):
                self.wait(self.rng.uniform(0.00005, 0.0004))
                self._emit(1 - side, _ACK, 0)

    def pure_ack(self, side: int) -> None:
        self._emit(side, _ACK, 0)

    def teardown(self) -> None:
        self.wait(self.rng.uniform(0.0001, 0.002))
        self._emit(0, int(FIN | ACK), 0)
        self.wait(self.rng.uniform(0.0001, 0.002))
        self._emit(1, int(FIN | ACK), 0)
        self.wait(self.rng.uniform(0.0001, 0.002))
        self._emit(0, _ACK, 0)

    def inject_anomalies(self) -> None:
        """Repeat one peer pure ACK (a duplicate ACK) and one data segment
        (a retransmission, seen as out of order)."""
        acks = [i for i, p in enumerate(self.packets)
                if self.dirs[i] == 1 and p.payload_len == 0 and p.flags == _ACK]
        data = [i for i, p in enumerate(self.packets) if p.payload_len > 0]
        picks = []
        if acks:
            picks.append(int(self.rng.choice(acks)))
        if data:
            picks.append(int(self.rng.choice(data)))
        for idx in sorted(set(picks), reverse=True):
            self.packets.insert(idx + 1, self.packets[idx])
            self.dirs.insert(idx + 1, self.dirs[idx])

    def session(self) -> TcpSession:
        a, b = self.ep
        return TcpSession(
            key=(a[0], a[1], b[0], b[1]),
            packets=annotate_anomalies(self.packets, self.dirs),
            directions=as_directions(self.dirs),
            termination=Termination.FIN,
        )


def _uniform(rng, bounds, randomize=True):
    lo, hi = bounds
    return rng.uniform(lo, hi) if randomize else (lo + hi) / 2


def _int_uniform(rng, bounds, randomize=True):
    lo, hi = bounds
    return int(rng.integers(lo, hi + 1)) if randomize else (lo + hi) // 2


def _ephemeral(rng) -> int:
    return int(rng.integers(1024, 65536))


# --------------------------------------------------------------------------
# benign sessions


def gen_benign_session(
    cfg: SynthConfig,
    rng: np.random.Generator,
    *,
    kind: str | None = None,
    job_size: int | None = None,
    reply_ratio: float | None = None,
    client: tuple | None = None,
    printer: str | None = None,
    start_us: int | None = None,
) -> TcpSession:
    """One benign session. ``kind`` is ``print_job``, ``status_poll`` or
    ``printer_initiated``; forcing ``job_size``/``reply_ratio`` implies a print job."""
    if kind is None:
        if job_size is not None or reply_ratio is not None:
            kind = "print_job"
        else:
            w = np.asarray(cfg.benign_mix, dtype=float)
            kind = ("print_job", "status_poll", "printer_initiated")[int(rng.choice(3, p=w / w.sum()))]
    printer = printer or cfg.printers[int(rng.integers(len(cfg.printers)))]
    client = client or (cfg.clients[int(rng.integers(len(cfg.clients)))], _ephemeral(rng))
    start_us = cfg.start_time * 1_000_000 if start_us is None else start_us

    if kind == "printer_initiated":
        server = cfg.servers[int(rng.integers(len(cfg.servers)))]
        conv = _Conversation((printer, client[1]), (server, 80), start_us, rng, cfg.mss)
        conv.handshake()
        conv.wait(rng.uniform(0.0002, 0.003))
        conv.send(0, _int_uniform(rng, cfg.upload_size_range), ack_every=2)
        conv.wait(rng.uniform(0.001, 0.03))
        reply = int(rng.integers(0, 50))
        if reply:
            conv.send(1, reply)
            conv.wait(rng.uniform(0.0001, 0.001))
            conv.pure_ack(0)
    else:
        conv = _Conversation(client, (printer, RAW_PORT), start_us, rng, cfg.mss)
        conv.handshake()
        conv.wait(rng.uniform(0.0002, 0.003))
        if kind == "status_poll":
            for _ in range(_int_uniform(rng, cfg.polls_per_session_range)):
                conv.send(0, _int_uniform(rng, cfg.poll_request_range))
                conv.wait(_uniform(rng, cfg.poll_delay_range))
                conv.send(1, _int_uniform(rng, cfg.poll_response_range))
                conv.wait(rng.uniform(0.0001, 0.001))
                conv.pure_ack(0)
                conv.wait(rng.uniform(0.0005, 0.005))
        elif kind == "print_job":
            _print_job(conv, cfg, rng, job_size, reply_ratio)
        else:
            raise ArgumentError(f"unknown benign session kind {kind!r}")
    if cfg.anomaly_rate and rng.random() < cfg.anomaly_rate:
        conv.inject_anomalies()
    conv.teardown()
    return conv.session()


def _print_job(conv: _Conversation, cfg: SynthConfig, rng, job_size, reply_ratio) -> None:
    if job_size is None:
        lo, hi = cfg.job_size_bounds
        job_size = int(np.clip(rng.lognormal(np.log(cfg.job_size_median), cfg.job_size_sigma), lo, hi))
    if reply_ratio is None:
        reply_ratio = _uniform(rng, cfg.reply_ratio_range)
    pauses = rng.random() < cfg.render_pause_prob
    remaining = job_size
    while remaining > 0:
        chunk = min(cfg.page_bytes, remaining)
        conv.send(0, chunk, ack_every=2)
        remaining -= chunk
        if remaining and pauses:
            conv.wait(_uniform(rng, cfg.render_pause_range))
    status_bytes = int(round(job_size * reply_ratio))
    sizes = []
    if status_bytes:
        n_status = -(-status_bytes // 48)
        base, extra = divmod(status_bytes, n_status)
        sizes = [base + (1 if i < extra else 0) for i in range(n_status)]
    if rng.random() < cfg.large_status_prob:
        sizes.append(_int_uniform(rng, cfg.large_status_range))
    for i, size in enumerate(sizes):
        conv.wait(_uniform(rng, cfg.status_delay_range) if i == 0 else rng.uniform(0.0001, 0.002))
        conv._emit(1, _PSH_ACK, size)
        if i % 2 == 1 or i == len(sizes) - 1:
            conv.wait(rng.uniform(0.00005, 0.0005))
            conv.pure_ack(0)


# --------------------------------------------------------------------------
# malicious sessions


def draw_commands(cfg: SynthConfig, rng: np.random.Generator, bank: CommandBank = DEFAULT_BANK) -> list:
    lo, hi = cfg.commands_per_session_range
    if cfg.randomize_grouping and rng.random() < cfg.single_command_prob:
        n = lo
    else:
        n = int(rng.integers(lo, hi + 1))
    idx = rng.choice(len(bank), size=min(n, len(bank)), replace=False)
    if not cfg.randomize_order:
        idx = np.sort(idx)
    return [bank.commands[int(i)] for i in idx]


def gen_malicious_session(
    cfg: SynthConfig,
    rng: np.random.Generator,
    *,
    commands: Sequence[Command] | None = None,
    bank: CommandBank = DEFAULT_BANK,
    client: tuple | None = None,
    printer: str | None = None,
    start_us: int | None = None,
) -> TcpSession:
    """One attack session: each command is a request, the printer's ACK,
    a delayed response and the attacker's ACK."""
    if commands is None:
        commands = draw_commands(cfg, rng, bank)
    printer = printer or cfg.printers[int(rng.integers(len(cfg.printers)))]
    client = client or (cfg.clients[int(rng.integers(len(cfg.clients)))], _ephemeral(rng))
    start_us = cfg.start_time * 1_000_000 if start_us is None else start_us
    timing = cfg.randomize_timing
    automated = rng.random() < cfg.automated_fraction
    gap_range = cfg.automated_gap_range if automated else cfg.manual_gap_range

    conv = _Conversation(client, (printer, RAW_PORT), start_us, rng, cfg.mss)
    conv.handshake()
    for i, cmd in enumerate(commands):
        conv.wait(_uniform(rng, gap_range, timing) if i else rng.uniform(0.0005, 0.01))
        conv.send(0, _int_uniform(rng, cmd.request_range, timing))
        conv.wait(rng.uniform(0.0001, 0.001))
        conv.pure_ack(1)
        response = _int_uniform(rng, cmd.response_range, timing)
        conv.wait(_uniform(rng, cmd.delay_range, timing))
        if response:
            conv.send(1, response)
            conv.wait(rng.uniform(0.0001, 0.001))
            conv.pure_ack(0)
    if cfg.anomaly_rate and rng.random() < cfg.anomaly_rate:
        conv.inject_anomalies()
    conv.teardown()
    return conv.session()


# --------------------------------------------------------------------------
# corpora


@dataclass
class Corpus:
    dataset: Dataset
    sessions: list
    manifest: dict

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.y


def _printer_blocks(cfg: SynthConfig, rng, n: int) -> list[str]:
    """Malicious runs target one printer at a time, 20-1000 sessions each."""
    out: list[str] = []
    i = 0
    while len(out) < n:
        out += [cfg.printers[i % len(cfg.printers)]] * _int_uniform(rng, cfg.sessions_per_printer_range)
        i += 1
    return out[:n]


def generate_sessions(cfg: SynthConfig) -> tuple[list, np.ndarray]:
    """All sessions of a corpus on one timeline, in start-time order."""
    if cfg.n_benign + cfg.n_malicious < 1:
        raise ArgumentError("a corpus needs at least one session")
    rng = np.random.default_rng(cfg.seed)
    labels = np.array([BENIGN] * cfg.n_benign + [MALICIOUS] * cfg.n_malicious, dtype=np.int64)
    labels = labels[rng.permutation(labels.size)]
    targets = iter(_printer_blocks(cfg, rng, cfg.n_malicious))
    gaps = rng.exponential(cfg.session_gap_mean, size=labels.size)
    now = cfg.start_time * 1_000_000
    sessions = []
    for i, label in enumerate(labels):
        now += max(1, int(round(gaps[i] * 1_000_000)))
        port = 1024 + i % 64000
        client = (cfg.clients[int(rng.integers(len(cfg.clients)))], port)
        if label == MALICIOUS:
            s = gen_malicious_session(cfg, rng, client=client, printer=next(targets), start_us=now)
        else:
            s = gen_benign_session(cfg, rng, client=client, start_us=now)
        sessions.append(s)
    return sessions, labels


def sessions_to_dataset(sessions: Sequence[TcpSession], labels, source: str) -> Dataset:
    meta = tuple(SessionMeta(source, s.key, s.start_time) for s in sessions)
    return Dataset(extract_matrix(sessions), np.asarray(labels), meta=meta if sessions else None)


def merged_packets(sessions: Sequence[TcpSession]) -> list[Packet]:
    """Interleave all sessions' packets in capture order (stable by time)."""
    tagged = [(p.micros, i, j, p) for i, s in enumerate(sessions) for j, p in enumerate(s.packets)]
    tagged.sort(key=lambda t: t[:3])
    return [t[3] for t in tagged]


def gen_corpus(cfg: SynthConfig, pcap_path=None, manifest_path=None) -> Corpus:
    sessions, labels = generate_sessions(cfg)
    ds = sessions_to_dataset(sessions, labels, f"synth:seed={cfg.seed}")
    manifest = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "counts": {"benign": int((labels == BENIGN).sum()), "malicious": int((labels == MALICIOUS).sum())},
        "sessions": len(sessions),
    }
    if pcap_path is not None:
        manifest["packets"] = write_pcap(merged_packets(sessions), pcap_path)
    if manifest_path is not None:
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Corpus(ds, sessions, manifest)


def printer_on_side_b(session: TcpSession, cfg: SynthConfig) -> bool:
    return session.key[2] in cfg.printers and session.key[0] not in cfg.printers
