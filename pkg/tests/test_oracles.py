import numpy as np
import pytest

from gibbs_lab.oracles import ENUMERATION_MAX_MODES, enumerate_functionals


def test_single_mode_by_hand():
    # u = 2|x| cos(...): int u^4 = 6|x|^4, int u^2 = 2|x|^2, only paired quadruples
    x = 0.7 + 0.2j
    e = enumerate_functionals(np.array([x]), 0.0)
    assert e["int_u4"] == pytest.approx(6 * abs(x) ** 4)
    assert e["int_u2"] == pytest.approx(2 * abs(x) ** 2)
    assert e["II_a"] == e["II_b"] == e["II_c"] == 0


def test_three_equal_pattern_appears():
    # (1, 1, 1, -3) needs mode 3
    g = np.array([1.0, 0.0, 1.0])
    e = enumerate_functionals(g, 0.0)
    assert e["II_c"] == pytest.approx(8.0)


def test_size_limit():
    with pytest.raises(ValueError):
        enumerate_functionals(np.ones(ENUMERATION_MAX_MODES + 1), 0.1)
