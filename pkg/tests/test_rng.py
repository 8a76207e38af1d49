import numpy as np
import pytest
from hypothesis import given, strategies as st

from eshelby_lab.rng import make_rng


@given(st.integers(0, 2**32), st.integers(0, 2**16))
def test_same_seed_and_stream_reproduce(seed, stream):
    a = make_rng(seed, stream).random(8)
    b = make_rng(seed, stream).random(8)
    assert np.array_equal(a, b)


def test_streams_and_seeds_differ():
    base = make_rng(1, 0).random(4)
    assert not np.array_equal(base, make_rng(1, 1).random(4))
    assert not np.array_equal(base, make_rng(2, 0).random(4))


def test_frozen_first_draw():
    # Philox output is platform independent; a change here shifts every seeded result
    assert make_rng(42, 3).random() == 0.4857539611915028


@pytest.mark.parametrize("seed, stream", [(-1, 0), (0, -1)])
def test_negative_arguments_rejected(seed, stream):
    with pytest.raises(ValueError):
        make_rng(seed, stream)
