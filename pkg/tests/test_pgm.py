import numpy as np
import pytest

from pnlm.pgm import (
    PGMHeaderError,
    PGMMaxvalError,
    PGMTruncatedError,
    encode_pgm,
    load_pgm,
    parse_pgm,
    save_pgm,
)


@pytest.fixture
def gradient():
    return np.arange(48, dtype=float).reshape(6, 8) * 5


def test_round_trip_binary(tmp_path, gradient):
    path = tmp_path / "g.pgm"
    save_pgm(gradient, path)
    assert np.array_equal(load_pgm(path), gradient)
    assert path.read_bytes().startswith(b"P5\n8 6\n255\n")
    assert len(path.read_bytes()) == len(b"P5\n8 6\n255\n") + 48


def test_round_trip_ascii(tmp_path, gradient):
    path = tmp_path / "g.pgm"
    save_pgm(gradient, path, binary=False)
    assert np.array_equal(load_pgm(path), gradient)


def test_p2_and_p5_agree(gradient):
    assert np.array_equal(parse_pgm(encode_pgm(gradient, True)), parse_pgm(encode_pgm(gradient, False)))


def test_clamp_and_rounding():
    img = np.array([[255.7, -3.0, 2.5, 3.49999]])
    out = parse_pgm(encode_pgm(img))
    assert out.tolist() == [[255.0, 0.0, 3.0, 3.0]]


def test_header_comments():
    data = b"P2\n# made by hand\n3 1 # width height\n# max\n255\n1 2\n# tail\n3\n"
    assert parse_pgm(data).tolist() == [[1.0, 2.0, 3.0]]


def test_binary_raster_may_start_with_hash_byte():
    data = b"P5\n2 1\n255\n" + bytes([35, 10])
    assert parse_pgm(data).tolist() == [[35.0, 10.0]]


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P6\n1 1\n255\n\x00", PGMHeaderError),
        (b"P5\n2 x\n255\n\x00\x00", PGMHeaderError),
        (b"P5\n2 2\n", PGMHeaderError),
        (b"P5\n1 1\n65535\n\x00\x00", PGMMaxvalError),
        (b"P5\n2 2\n255\n\x00\x00\x00", PGMTruncatedError),
        (b"P2\n2 2\n255\n1 2 3\n", PGMTruncatedError),
    ],
)
def test_malformed_inputs(data, exc):
    with pytest.raises(exc):
        parse_pgm(data)
