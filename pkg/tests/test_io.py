import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffjpeg.io import (
    CSV_HEADER,
    PPMError,
    SweepRecord,
    decode_ppm,
    encode_ppm,
    format_float,
    list_images,
    read_ppm,
    write_csv,
    write_ppm,
)

PIXELS_2X2 = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255])


def test_two_by_two_example():
    img = decode_ppm(b"P6\n2 2\n255\n" + PIXELS_2X2)
    assert img.shape == (3, 2, 2) and img.dtype == np.float64
    assert img[0].ravel().tolist() == [255, 0, 0, 255]
    assert img[1].ravel().tolist() == [0, 255, 0, 255]
    assert img[2].ravel().tolist() == [0, 0, 255, 255]


def test_header_comments_and_whitespace():
    data = b"P6 # a comment\n# another\n 2\t2\r\n255\n" + PIXELS_2X2
    assert np.array_equal(decode_ppm(data), decode_ppm(b"P6\n2 2\n255\n" + PIXELS_2X2))
    # canonical re-encoding drops the comments
    assert encode_ppm(decode_ppm(data)) == b"P6\n2 2\n255\n" + PIXELS_2X2


def test_gray_planes():
    img = decode_ppm(b"P5\n3 1\n255\n\x00\x80\xff")
    assert img.shape == (1, 1, 3)
    assert img.ravel().tolist() == [0, 128, 255]
    assert encode_ppm(img) == b"P5\n3 1\n255\n\x00\x80\xff"


@pytest.mark.parametrize(
    "data, message",
    [
        (b"P6\n2 2\n65535\n" + bytes(24), "unsupported maxval"),
        (b"P6\n2 2\n255\n" + PIXELS_2X2[:-1], "truncated"),
        (b"P3\n2 2\n255\n" + PIXELS_2X2, "unsupported format"),
        (b"P6\n2 x\n255\n" + PIXELS_2X2, "non-integer"),
        (b"P6\n2 2", "malformed"),
        (b"P6\n0 2\n255\n", "zero-sized"),
        (b"", "malformed"),
    ],
)
def test_bad_files(data, message):
    with pytest.raises(PPMError, match=message):
        decode_ppm(data)


def test_encode_clamps_and_rounds():
    img = np.array([[[-3.0, 0.49, 0.5, 254.6, 300.0, 127.5]]])
    assert list(encode_ppm(img)[-6:]) == [0, 0, 1, 255, 255, 128]
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        encode_ppm(np.full((3, 1, 1), np.nan))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 3]), st.data())
def test_round_trip_is_lossless(h, w, c, data):
    magic = b"P6" if c == 3 else b"P5"
    payload = data.draw(st.binary(min_size=h * w * c, max_size=h * w * c))
    raw = magic + b"\n%d %d\n255\n" % (w, h) + payload
    img = decode_ppm(raw)
    assert encode_ppm(img) == raw
    assert np.array_equal(decode_ppm(encode_ppm(img)), img)


def test_file_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (3, 5, 7)).astype(np.float64)
    write_ppm(tmp_path / "a.ppm", img)
    write_ppm(tmp_path / "b.pgm", img[:1])
    (tmp_path / "notes.txt").write_text("x")
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)
    assert [p.split("/")[-1] for p in list_images(tmp_path)] == ["a.ppm", "b.pgm"]
    with pytest.raises(OSError):
        read_ppm(tmp_path / "missing.ppm")


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_csv_empty_and_single(tmp_path):
    write_csv(tmp_path / "e.csv", [])
    assert _read(tmp_path / "e.csv") == [list(CSV_HEADER)]
    assert ",".join(CSV_HEADER) == "quality,variant,psnr_db,ssim,grad_q_norm,grad_qt_norm"
    write_csv(tmp_path / "one.csv", [SweepRecord(50, "ours", 34.123456789, 0.95)], meta="run 1")
    text = (tmp_path / "one.csv").read_text()
    assert text.splitlines()[0] == "# run 1"
    assert text.splitlines()[2] == "50,ours,34.1235,0.95,nan,nan"


def test_csv_special_values(tmp_path):
    recs = [SweepRecord(12.5, "reference", float("inf"), 1.0, 0.0, 1.23456789e-12)]
    write_csv(tmp_path / "s.csv", recs)
    row = _read(tmp_path / "s.csv")[1]
    assert row == ["12.5", "reference", "inf", "1", "0", "1.23457e-12"]
    assert math.isinf(float(row[2]))
    assert format_float(float("-inf")) == "-inf"


def test_csv_io_failure(tmp_path):
    with pytest.raises(OSError):
        write_csv(tmp_path / "nope" / "x.csv", [])
