import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from mortsim import keyed_rng as kr

u64 = st.integers(0, 2**64 - 1)


def test_known_splitmix_values():
    # reference outputs of splitmix64 seeded with 0: first two draws
    assert kr.mix(0) == 0xE220A8397B1DCDAF
    assert kr.mix(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


@given(st.lists(u64, min_size=1, max_size=50), u64)
def test_vector_matches_scalar(keys, stream):
    vec = kr.uniforms(stream, keys)
    assert [kr.uniform(stream, k) for k in keys] == vec.tolist()
    assert np.all((vec >= 0) & (vec < 1))


@given(st.lists(u64, min_size=2, max_size=30, unique=True), u64)
def test_draws_ignore_order(keys, stream):
    a = dict(zip(keys, kr.uniforms(stream, keys)))
    rev = keys[::-1]
    b = dict(zip(rev, kr.uniforms(stream, rev)))
    assert a == b


def test_key_of_separates_parts():
    assert kr.key_of(1, 2) != kr.key_of(2, 1)
    assert kr.key_of(1, 2, 3) == kr.key_of(1, 2, 3)
    assert kr.key_of(0) != kr.key_of(0, 0)


def test_uniformity():
    u = kr.uniforms(kr.key_of(7), np.arange(200_000, dtype=np.uint64))
    assert abs(u.mean() - 0.5) < 0.005
    counts, _ = np.histogram(u, bins=10, range=(0, 1))
    assert counts.min() > 19_000 and counts.max() < 21_000
