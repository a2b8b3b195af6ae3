"""Unit tests for raster file I/O."""

import json
import math

import numpy as np
import pytest

from clients.raster_io import heat_map, load_raster, save_pgm, save_raster_csv
from height_engine.errors import RasterIOError
from height_engine.raster import LOG_FLOOR, Raster


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _write_csv(path, text: str, meta: dict | None) -> None:
    path.write_text(text)
    if meta is not None:
        path.with_suffix(".json").write_text(json.dumps(meta))


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_sixteen_bit_pgm(tmp_path):
    """
    Story: A 2x2 P5 file with maxval 65535 and pixels 0, 65535, 32768, 16384
    loads as log(v / 65535), with the zero pixel floored before the log.
    """
    path = tmp_path / "scene.pgm"
    pixels = np.array([0, 65535, 32768, 16384], dtype=">u2")
    path.write_bytes(b"P5\n2 2\n65535\n" + pixels.tobytes())
    raster = load_raster(path, pitch=275.0)
    expected = np.log(np.maximum(pixels.astype(float) / 65535, LOG_FLOOR)).reshape(2, 2)
    np.testing.assert_allclose(raster.values, expected, rtol=1e-15)
    assert raster.values[0, 0] == pytest.approx(math.log(LOG_FLOOR))
    assert raster.pitch == 275.0


@pytest.mark.unit
def test_eight_bit_pgm_with_comment(tmp_path):
    path = tmp_path / "scene.pgm"
    path.write_bytes(b"P5\n# camera Bf\n3 1\n255\n" + bytes([51, 102, 255]))
    raster = load_raster(path)
    np.testing.assert_allclose(raster.values, np.log([[0.2, 0.4, 1.0]]), rtol=1e-14)


@pytest.mark.unit
def test_pgm_errors_name_offsets(tmp_path):
    """
    Story: A bad magic number fails at offset 0; a raster shorter than its
    header promises fails at the end of the file.
    """
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n2 2\n255\n" + bytes(4))
    with pytest.raises(RasterIOError, match="offset 0") as info:
        load_raster(bad)
    assert info.value.offset == 0

    short = tmp_path / "short.pgm"
    data = b"P5\n2 2\n65535\n" + bytes(5)
    short.write_bytes(data)
    with pytest.raises(RasterIOError, match="truncated") as info:
        load_raster(short)
    assert info.value.offset == len(data)


@pytest.mark.unit
def test_pgm_writer_and_heat_map(tmp_path):
    """
    Story: Valid heights are scaled to [1, maxval], invalid cells are black,
    and the written heat map loads back with the same sample order.
    """
    heights = np.array([[1000.0, 2000.0], [np.nan, 3000.0]])
    valid = np.array([[True, True], [False, True]])
    samples = heat_map(heights, valid)
    assert samples.tolist() == [[1, 32768], [0, 65535]]
    assert samples[valid].min() == 1 and samples[~valid].tolist() == [0]
    assert heat_map(np.full((1, 2), 5.0), np.ones((1, 2), bool)).tolist() == [[65535, 65535]]
    assert not heat_map(heights, np.zeros((2, 2), bool)).any()

    path = tmp_path / "heights.pgm"
    save_pgm(samples, path)
    loaded = load_raster(path)
    np.testing.assert_allclose(loaded.values[0, 1], math.log(32768 / 65535))
    with pytest.raises(RasterIOError):
        save_pgm(np.array([[70000]]), path)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_csv_with_sidecar(tmp_path):
    path = tmp_path / "cf.csv"
    _write_csv(path, "0.1,0.2,0.3\n", {"rows": 1, "cols": 3, "pitch_m": 1100})
    raster = load_raster(path)
    np.testing.assert_allclose(raster.values, np.log([[0.1, 0.2, 0.3]]), rtol=1e-15)
    assert raster.pitch == 1100.0


@pytest.mark.unit
def test_csv_pitch_falls_back_to_the_callers_pitch(tmp_path):
    path = tmp_path / "cf.csv"
    _write_csv(path, "0.1,0.2,0.3\n", {"rows": 1, "cols": 3})
    assert load_raster(path, pitch=550.0).pitch == 550.0
    assert load_raster(path).pitch == 275.0
    with_pitch = tmp_path / "df.csv"
    _write_csv(with_pitch, "0.1,0.2,0.3\n", {"rows": 1, "cols": 3, "pitch_m": 1100})
    assert load_raster(with_pitch, pitch=550.0).pitch == 1100.0


@pytest.mark.unit
@pytest.mark.parametrize(
    "text, line, message",
    [
        ("0.1,0.2\n0.3\n", 2, "dimension mismatch"),
        ("0.1,0.2\n0.3,abc\n", 2, "not a number"),
        ("0.1,nan\n0.3,0.4\n", 1, "non-finite"),
        ("0.1,0.2\n0.3,0.4\n0.5,0.6\n", 3, "more than 2 rows"),
    ],
)
def test_csv_errors_name_lines(tmp_path, text, line, message):
    path = tmp_path / "df.csv"
    _write_csv(path, text, {"rows": 2, "cols": 2, "pitch_m": 275})
    with pytest.raises(RasterIOError, match=message) as info:
        load_raster(path)
    assert info.value.offset == line


@pytest.mark.unit
def test_csv_needs_a_valid_sidecar(tmp_path):
    path = tmp_path / "an.csv"
    _write_csv(path, "0.1,0.2\n", None)
    with pytest.raises(RasterIOError, match="missing JSON sidecar"):
        load_raster(path)
    _write_csv(path, "0.1,0.2\n", {"rows": 0, "cols": 2})
    with pytest.raises(RasterIOError, match="rows"):
        load_raster(path)


@pytest.mark.unit
def test_csv_writer_reproduces_the_raster(tmp_path):
    raster = Raster(np.random.default_rng(0).normal(-1.0, 0.3, (4, 5)), pitch=550.0)
    path = tmp_path / "aa.csv"
    save_raster_csv(raster, path)
    loaded = load_raster(path)
    np.testing.assert_allclose(loaded.values, raster.values, rtol=0, atol=1e-12)
    assert loaded.pitch == 550.0


@pytest.mark.unit
def test_unknown_format_and_missing_file(tmp_path):
    with pytest.raises(RasterIOError, match="not found"):
        load_raster(tmp_path / "nope.pgm")
    odd = tmp_path / "scene.tif"
    odd.write_bytes(b"")
    with pytest.raises(RasterIOError, match="unsupported"):
        load_raster(odd)
