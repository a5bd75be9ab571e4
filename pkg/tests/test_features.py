import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import handshake_session, random_session, session_rows
from oracles import features_oracle, stats_oracle
from printids.capture import TcpSession, reassemble_sessions
from printids.errors import ContractError
from printids.features import (
    COUNT_FEATURES,
    FEATURE_INDEX,
    FEATURE_NAMES,
    N_FEATURES,
    STAT_FIELDS,
    compute_stats,
    extract_features,
    extract_matrix,
    feature_names,
)
from printids.synthesis import SynthConfig, gen_benign_session


def _f(vec, name):
    return vec[FEATURE_INDEX[name]]


def assert_matches_oracle(session):
    vec = extract_features(session)
    ref = features_oracle(session_rows(session))
    assert set(ref) == set(FEATURE_NAMES)
    for name in FEATURE_NAMES:
        got, want = vec[FEATURE_INDEX[name]], ref[name]
        if name in COUNT_FEATURES:
            assert got == want, name
        else:
            assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12), (name, got, want)


# --------------------------------------------------------------------------
# names


def test_feature_names_layout():
    names = feature_names()
    assert len(names) == N_FEATURES == 75
    assert names[5] == "bytes_A_B_ratio"      # sixth entry
    assert names[44] == "packet_size_B_max"   # forty-fifth entry
    assert names[0] == "ack" and names[-1] == "urg_B"
    assert names == sorted(names)
    assert len(set(names)) == 75
    # 28 size, 25 time, 22 general
    size = [n for n in names if n.startswith(("packet_size", "bytes"))]
    time = [n for n in names if n.startswith("packet_inter_arrival") or n == "duration"]
    assert (len(size), len(time), 75 - len(size) - len(time)) == (28, 25, 22)


def test_feature_names_returns_fresh_list():
    a = feature_names()
    a.append("x")
    assert len(feature_names()) == 75


# --------------------------------------------------------------------------
# compute_stats


def test_stats_singleton():
    s = compute_stats([5])
    assert (s.avg, s.median, s.stdev, s.var, s.min, s.max, s.sum, s.entropy) == (5, 5, 0, 0, 5, 5, 5, 0)


def test_stats_two_values_twice():
    s = compute_stats([100, 100, 40, 40])
    assert (s.avg, s.median, s.min, s.max, s.sum, s.var, s.stdev, s.entropy) == (70, 70, 40, 100, 280, 900, 30, 1.0)


def test_stats_empty():
    assert compute_stats([]).as_tuple() == (0.0,) * 8


def test_stats_field_order_matches_names():
    s = compute_stats([1, 2, 2, 9])
    assert s.as_tuple() == tuple(getattr(s, f) for f in STAT_FIELDS)


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=300)
@given(st.lists(st.one_of(finite, st.integers(0, 5).map(float)), max_size=60))
def test_stats_match_oracle(xs):
    got = compute_stats(xs)
    ref = stats_oracle(xs)
    for name in STAT_FIELDS:
        assert math.isclose(getattr(got, name), ref[name], rel_tol=1e-9, abs_tol=1e-6), name


@settings(max_examples=300)
@given(st.lists(finite, min_size=1, max_size=60))
def test_stats_invariants(xs):
    s = compute_stats(xs)
    assert math.isclose(s.var, s.stdev ** 2, rel_tol=1e-9, abs_tol=1e-12)
    assert s.min <= s.median <= s.max
    assert 0.0 <= s.entropy <= math.log2(len(set(xs))) + 1e-12


# --------------------------------------------------------------------------
# extract_features: examples


def test_zero_payload_session():
    packets = handshake_session(req=0, resp=0)
    s = reassemble_sessions(packets)[0]
    v = extract_features(s)
    assert _f(v, "bytes") == 0 and _f(v, "bytes_A_B_ratio") == 0 and _f(v, "packet_size_max") == 0
    assert _f(v, "duration") == pytest.approx((packets[-1].micros - packets[0].micros) / 1e6, abs=0)


def test_reference_session_matches_oracle():
    packets = handshake_session()
    del packets[5]  # SYN, SYN-ACK, ACK, data A, data B, FIN, FIN-ACK, ACK
    s = reassemble_sessions(packets)[0]
    v = extract_features(s)
    assert _f(v, "bytes_A") == 100 and _f(v, "bytes_B") == 40
    assert _f(v, "bytes_A_B_ratio") == 0.4
    assert _f(v, "packet_size_max") == 100 and _f(v, "packet_size_B_max") == 40
    assert _f(v, "ack") == sum(1 for p in packets if p.flags & 0x10) == 7
    assert_matches_oracle(s)


def test_benign_job_of_500k_with_189k_replies():
    rng = np.random.default_rng(0)
    cfg = replace(SynthConfig(), large_status_prob=0.0)
    s = gen_benign_session(cfg, rng, job_size=500_000, reply_ratio=0.378)
    v = extract_features(s)
    assert _f(v, "bytes_A") == 500_000 and _f(v, "bytes_B") == 189_000
    assert _f(v, "bytes_A_B_ratio") == pytest.approx(0.378, abs=1e-12)
    assert _f(v, "bytes_A_B_ratio") < 0.38


def test_empty_session_is_contract_error():
    with pytest.raises(ContractError):
        extract_features(TcpSession(("a", 1, "b", 2), (), ()))


def test_extract_matrix_shapes():
    assert extract_matrix([]).shape == (0, 75)
    s = reassemble_sessions(handshake_session())[0]
    m = extract_matrix([s, s])
    assert m.shape == (2, 75) and np.array_equal(m[0], m[1])


def test_ds_field_first_packet_per_direction():
    packets = handshake_session()
    packets[1] = replace(packets[1], ds_field=184)
    packets[4] = replace(packets[4], ds_field=40)
    packets[0] = replace(packets[0], ds_field=8)
    v = extract_features(reassemble_sessions(packets)[0])
    assert (_f(v, "ds_field_A"), _f(v, "ds_field_B")) == (8, 184)


def test_one_sided_session_defaults():
    packets = handshake_session()[:1]
    v = extract_features(reassemble_sessions(packets)[0])
    assert np.all(np.isfinite(v))
    assert _f(v, "packets_B") == 0 and _f(v, "packets_A_B_ratio") == 0
    assert _f(v, "packet_inter_arrival_B_max") == 0 and _f(v, "duration") == 0


# --------------------------------------------------------------------------
# properties

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_oracle_equivalence(seed):
    assert_matches_oracle(random_session(np.random.default_rng(seed)))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_direction_consistency(seed):
    v = extract_features(random_session(np.random.default_rng(seed)))
    for base in ("bytes", "packets", "ack", "push", "reset", "urg"):
        assert _f(v, f"{base}_A") + _f(v, f"{base}_B") == _f(v, base)
    assert np.all(np.isfinite(v))
    counts = np.array([_f(v, n) for n in COUNT_FEATURES])
    assert np.all(counts >= 0) and np.all(counts == np.round(counts))


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(-10**9, 10**9))
def test_time_shift_invariance(seed, shift_us):
    s = random_session(np.random.default_rng(seed))
    base = s.packets[0].micros
    shifted = tuple(replace(p, timestamp=(p.micros + shift_us + 10**9) / 1e6) for p in s.packets)
    assert all(q.micros - base == p.micros - base + shift_us + 10**9 for p, q in zip(s.packets, shifted))
    t = TcpSession(s.key, shifted, s.directions)
    assert np.array_equal(extract_features(s), extract_features(t))


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(2, 9))
def test_size_scale_covariance(seed, c):
    s = random_session(np.random.default_rng(seed))
    scaled = TcpSession(s.key, tuple(replace(p, payload_len=p.payload_len * c, wire_len=p.wire_len * c) for p in s.packets), s.directions)
    v, w = extract_features(s), extract_features(scaled)
    for prefix in ("packet_size", "packet_size_A", "packet_size_B"):
        for stat in ("avg", "median", "min", "max", "sum", "stdev"):
            n = f"{prefix}_{stat}"
            assert _f(w, n) == pytest.approx(c * _f(v, n), rel=1e-9, abs=1e-9)
        n = f"{prefix}_var"
        assert _f(w, n) == pytest.approx(c * c * _f(v, n), rel=1e-9, abs=1e-9)
    assert _f(w, "bytes_A_B_ratio") == pytest.approx(_f(v, "bytes_A_B_ratio"), rel=1e-12)
