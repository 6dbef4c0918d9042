"""
Fixed-point format tests: range arithmetic, rounding, saturation, codes.
"""
import itertools

import numpy as np
import pytest

from core.exceptions import InvalidFormatError, NonFiniteError
from modules.fixedpoint import (
    FixedValue,
    QFormat,
    dequantize,
    encode,
    encode_array,
    in_range_mask,
    quantize,
    quantize_array,
)


Q44 = QFormat(4, 4)


def test_q44_range_is_exact():
    assert Q44.min_value() == -8.0
    assert Q44.max_value() == 7.9375
    assert Q44.step() == 0.0625
    assert Q44.num_values() == 256
    assert Q44.code_range() == (-128, 127)


@pytest.mark.parametrize("x, q, expected", [
    (7.95, QFormat(4, 4), 7.9375),
    (0.40, QFormat(3, 3), 0.375),
    (0.03125, QFormat(4, 4), 0.0),
    (-100.0, QFormat(4, 4), -8.0),
    (9.1, QFormat(4, 4), 7.9375),
])
def test_quantize_examples(x, q, expected):
    assert quantize(x, q) == expected


def test_ties_go_to_even_code():
    """0.09375 sits between codes 1 and 2 of Q4.4 and goes to 2."""
    assert quantize(0.09375, Q44) == 0.125
    assert quantize(-0.03125, Q44) == 0.0
    assert quantize(-0.09375, Q44) == -0.125


def test_zero_is_on_every_grid():
    for i, f in itertools.product(range(1, 9), range(0, 9)):
        assert quantize(0.0, QFormat(i, f)) == 0.0


def test_grid_round_trip_exhaustive_small_formats():
    for i, f in itertools.product(range(1, 9), range(0, 9)):
        q = QFormat(i, f)
        grid = q.grid()
        assert len(grid) == q.num_values()
        np.testing.assert_array_equal(quantize_array(grid, q), grid)


def test_grid_round_trip_sampled_large_format():
    q = QFormat(16, 16)
    rng = np.random.default_rng(0)
    codes = rng.integers(*q.code_range(), size=10_000, endpoint=True)
    values = codes * q.step()
    np.testing.assert_array_equal(quantize_array(values, q), values)


def test_properties_on_random_inputs():
    rng = np.random.default_rng(1)
    x = np.sort(rng.uniform(-20, 20, size=5000))
    for q in (QFormat(3, 3), Q44, QFormat(6, 2)):
        y = quantize_array(x, q)
        assert np.all(np.diff(y) >= 0)  # monotone
        np.testing.assert_array_equal(quantize_array(y, q), y)  # idempotent
        clamped = np.clip(x, q.min_value(), q.max_value())
        assert np.max(np.abs(y - clamped)) <= q.step() / 2


def test_grids_nest():
    q = QFormat(3, 2)
    for finer in (QFormat(3, 3), QFormat(4, 2)):
        np.testing.assert_array_equal(quantize_array(q.grid(), finer), q.grid())


@pytest.mark.parametrize("raw, q, expected", [
    (-128, QFormat(4, 4), -8.0),
    (0, QFormat(8, 8), 0.0),
    (3, QFormat(3, 3), 0.375),
])
def test_dequantize(raw, q, expected):
    assert dequantize(FixedValue(raw, q)) == expected


def test_encode_codes():
    assert encode(7.9375, Q44).raw == 127
    assert encode(0.0, QFormat(8, 8)).raw == 0
    assert encode(9.0, Q44).raw == 127
    x = np.linspace(-10, 10, 101)
    np.testing.assert_array_equal(encode_array(x, Q44) * Q44.step(), quantize_array(x, Q44))


def test_fixed_value_rejects_out_of_range_code():
    with pytest.raises(InvalidFormatError):
        FixedValue(128, Q44)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_input_raises(bad):
    with pytest.raises(NonFiniteError):
        quantize(bad, Q44)
    with pytest.raises(NonFiniteError):
        encode(bad, Q44)


@pytest.mark.parametrize("i, f", [(0, 4), (4, -1), (40, 20)])
def test_invalid_widths(i, f):
    with pytest.raises(InvalidFormatError):
        QFormat(i, f)


def test_parse_and_text_form():
    assert QFormat.parse("Q4.4") == Q44
    assert QFormat.parse("q16.16") == QFormat(16, 16)
    assert QFormat.parse("6/6") == QFormat(6, 6)
    assert str(QFormat(5, 3)) == "Q5.3"
    with pytest.raises(InvalidFormatError):
        QFormat.parse("Q4")


def test_in_range_mask_is_closed_interval():
    x = np.array([-8.5, -8.0, 0.5, 7.9375, 7.95, 9.0])
    np.testing.assert_array_equal(in_range_mask(x, Q44), [False, True, True, True, False, False])


def test_describe():
    info = Q44.describe()
    assert info["format"] == "Q4.4"
    assert info["min_value"] == -8.0 and info["max_value"] == 7.9375
    assert info["num_values"] == 256
