import hashlib

import numpy as np

from multistage.streams import derive_stream, stream_key


def test_key_follows_documented_rule():
    digest = hashlib.sha256("7\x1fexp/a\x1f3".encode()).digest()
    assert stream_key(7, "exp/a", 3) == int.from_bytes(digest, "little")


def test_same_triple_same_draws():
    a = derive_stream(11, "rate/changepoint", 0).random(1000)
    b = derive_stream(11, "rate/changepoint", 0).random(1000)
    assert np.array_equal(a, b)


def test_neighbouring_replications_differ():
    a = derive_stream(11, "x", 0).random(1000)
    b = derive_stream(11, "x", 1).random(1000)
    c = derive_stream(12, "x", 0).random(1000)
    d = derive_stream(11, "y", 0).random(1000)
    for other in (b, c, d):
        assert not np.array_equal(a, other)


def test_cross_correlation_small():
    a = derive_stream(0, "corr", 0).standard_normal(10**6)
    for rep in (1, 2):
        b = derive_stream(0, "corr", rep).standard_normal(10**6)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_seed_accepts_full_u64_range():
    assert derive_stream(2**64 - 1, "x", 0).random() != derive_stream(0, "x", 0).random()
