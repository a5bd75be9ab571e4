from printids.capture import FRAME_OVERHEAD, Packet, TcpSession, annotate_anomalies, as_directions

FLAG_BITS = {"FIN": 0x01, "SYN": 0x02, "RST": 0x04, "PSH": 0x08, "ACK": 0x10, "URG": 0x20}

CLIENT = ("10.0.0.1", 40000)
PRINTER = ("10.0.0.9", 9100)


def flags_of(*names):
    out = 0
    for n in names:
        out |= FLAG_BITS[n]
    return out


def pkt(t_us, side, flags, seq=0, ack=0, payload=0, a=CLIENT, b=PRINTER, ds=0):
    """side 'A' sends a->b, 'B' sends b->a."""
    src, dst = (a, b) if side == "A" else (b, a)
    return Packet(
        timestamp=t_us / 1e6, src=src[0], sport=src[1], dst=dst[0], dport=dst[1],
        flags=flags_of(*flags), seq=seq % 2**32, ack=ack % 2**32, payload_len=payload,
        wire_len=payload + FRAME_OVERHEAD, ds_field=ds,
    )


def handshake_session(a=CLIENT, b=PRINTER, t0=1_000_000, req=100, resp=40):
    """SYN, SYN-ACK, ACK, PSH data A, PSH data B, ACK, FIN, FIN-ACK, ACK (9 packets)."""
    A, B = 1000, 5000
    return [
        pkt(t0, "A", ["SYN"], A, 0, 0, a, b),
        pkt(t0 + 100, "B", ["SYN", "ACK"], B, A + 1, 0, a, b),
        pkt(t0 + 200, "A", ["ACK"], A + 1, B + 1, 0, a, b),
        pkt(t0 + 300, "A", ["PSH", "ACK"], A + 1, B + 1, req, a, b),
        pkt(t0 + 5_000, "B", ["PSH", "ACK"], B + 1, A + 1 + req, resp, a, b),
        pkt(t0 + 5_300, "A", ["ACK"], A + 1 + req, B + 1 + resp, 0, a, b),
        pkt(t0 + 6_000, "A", ["FIN", "ACK"], A + 1 + req, B + 1 + resp, 0, a, b),
        pkt(t0 + 6_400, "B", ["FIN", "ACK"], B + 1 + resp, A + 2 + req, 0, a, b),
        pkt(t0 + 6_800, "A", ["ACK"], A + 2 + req, B + 2 + resp, 0, a, b),
    ]


def random_session(rng, max_packets=20):
    """A TcpSession with random flags, payloads, timing, DS bytes and
    sequence numbers; anomaly flags are computed as during reassembly."""
    n = int(rng.integers(1, max_packets + 1))
    dirs = [0] + [int(d) for d in rng.integers(0, 2, size=n - 1)]
    t = int(rng.integers(0, 2**40))
    seqs = [int(rng.integers(0, 2**32)), int(rng.integers(0, 2**32))]
    packets = []
    names = list(FLAG_BITS)
    for d in dirs:
        t += int(rng.choice([0, 1, 7, int(rng.integers(0, 5_000_000))]))
        flags = [f for f in names if rng.random() < 0.3]
        payload = int(rng.choice([0, 1, 40, int(rng.integers(0, 1500))]))
        # mostly in-order sequence numbers with occasional jumps back/forward
        jump = int(rng.choice([0, 0, 0, -1, 50, -50]))
        seq = (seqs[d] + jump) % 2**32
        seqs[d] = (seq + payload) % 2**32
        ack = seqs[1 - d] if rng.random() < 0.8 else int(rng.integers(0, 2**32))
        side = "A" if d == 0 else "B"
        packets.append(pkt(t, side, flags, seq, ack, payload, ds=int(rng.choice([0, 0, 40, 184]))))
    packets = annotate_anomalies(packets, dirs)
    key = (*CLIENT, *PRINTER)
    return TcpSession(key, tuple(packets), as_directions(dirs))


def session_rows(session):
    """Plain packet table for the brute-force feature oracle."""
    inv = {v: k for k, v in FLAG_BITS.items()}
    rows = []
    for p, d in zip(session.packets, session.directions):
        rows.append({
            "t_us": round(p.timestamp * 1e6),
            "dir": "A" if int(d) == 0 else "B",
            "flags": {inv[b] for b in inv if p.flags & b},
            "payload": p.payload_len,
            "ds": p.ds_field,
            "anomalies": {str(a.value) if hasattr(a, "value") else str(a) for a in p.anomalies},
        })
    return rows
