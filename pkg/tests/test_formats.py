"""
Tests for on-disk formats: tensor records, PPM images and points CSV files.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from lfmgan.core import CheckpointError, DataValidationError, FormatType
from lfmgan.formats import (
    PPMLoader,
    PointsLoader,
    RecordFile,
    RecordsLoader,
    decode_ppm,
    decode_records,
    detect_format,
    encode_ppm,
    encode_records,
    loader_for,
    read_points,
    read_records,
    to_uint8,
    write_points,
    write_records,
)


class TestRecords:
    """Test cases for the tensor-record container."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.record = RecordFile('{"kind": "test"}', {
            "weights": np.arange(12, dtype=np.float32).reshape(3, 4),
            "history": np.linspace(0, 1, 5),
            "count": np.array([7], dtype=np.int64),
            "pixels": np.arange(6, dtype=np.uint8).reshape(1, 2, 3),
            "scalar": np.float64(2.5) * np.ones(()),
        })

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_write_read(self):
        path = Path(self.temp_dir) / "a.lfmt"
        write_records(path, self.record)
        loaded = read_records(path)
        assert loaded.header == self.record.header
        assert list(loaded.tensors) == list(self.record.tensors)
        for name, array in self.record.tensors.items():
            assert loaded.tensors[name].dtype == array.dtype
            np.testing.assert_array_equal(loaded.tensors[name], array)
        assert not (Path(self.temp_dir) / "a.lfmt.tmp").exists()

    def test_encoding_is_deterministic(self):
        assert encode_records(self.record) == encode_records(self.record)

    def test_truncated_file(self):
        blob = encode_records(self.record)
        with pytest.raises(CheckpointError):
            decode_records(blob[:-10])

    def test_flipped_byte(self):
        blob = bytearray(encode_records(self.record))
        blob[20] ^= 0xFF
        with pytest.raises(CheckpointError):
            decode_records(bytes(blob))

    def test_bad_magic_and_version(self):
        with pytest.raises(CheckpointError):
            decode_records(b"NOPE" + bytes(20))
        blob = encode_records(self.record, version=2)
        with pytest.raises(CheckpointError):
            decode_records(blob)

    def test_unsupported_dtype(self):
        with pytest.raises(CheckpointError):
            encode_records(RecordFile("", {"c": np.zeros(2, dtype=np.complex128)}))

    def test_loader(self):
        path = Path(self.temp_dir) / "b.lfmt"
        loader = RecordsLoader(path)
        data = {"header": "h", "tensors": {"x": np.ones(3)}}
        assert loader.validate(data)
        assert not loader.validate({"header": "h"})
        loader.save(data)
        loaded = loader.load()
        assert loaded["header"] == "h"
        np.testing.assert_array_equal(loaded["tensors"]["x"], np.ones(3))

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            RecordsLoader(Path(self.temp_dir) / "missing.lfmt").load()


class TestPPM:
    """Test cases for the PPM codec."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.image = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_encode_decode(self):
        blob = encode_ppm(self.image)
        assert blob.startswith(b"P6\n7 5\n255\n")
        np.testing.assert_array_equal(decode_ppm(blob), self.image)

    def test_header_comments(self):
        payload = bytes(range(12))
        blob = b"P6\n# made by hand\n2 2\n# depth\n255\n" + payload
        np.testing.assert_array_equal(decode_ppm(blob).ravel(), np.arange(12))

    def test_rejects_other_variants(self):
        with pytest.raises(DataValidationError):
            decode_ppm(b"P3\n1 1\n255\n0 0 0")
        with pytest.raises(DataValidationError):
            decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(DataValidationError):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(DataValidationError):
            encode_ppm(self.image.astype(np.float32))

    def test_to_uint8(self):
        image = np.stack([np.full((2, 2), -1.0), np.zeros((2, 2)), np.full((2, 2), 1.0)])
        pixels = to_uint8(image)
        assert pixels.shape == (2, 2, 3)
        np.testing.assert_array_equal(pixels[0, 0], [0, 128, 255])

    def test_loader_save_load(self):
        path = Path(self.temp_dir) / "img.ppm"
        PPMLoader(path).save({"image": self.image})
        np.testing.assert_array_equal(PPMLoader(path).load()["image"], self.image)


class TestPoints:
    """Test cases for points CSV files."""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_write_read(self):
        points = np.array([[0.1, -2.0], [1e-17, 3.5]])
        path = self.temp_dir / "p.csv"
        write_points(path, points)
        assert path.read_text().splitlines() == ["x0,x1", "0.1,-2.0", "1e-17,3.5"]
        data = read_points(path)
        assert data["columns"] == ["x0", "x1"]
        np.testing.assert_array_equal(data["points"], points)
        assert not (self.temp_dir / "p.csv.tmp").exists()

    def test_column_prefix_and_names(self):
        write_points(self.temp_dir / "z.csv", np.zeros((2, 3)), prefix="z")
        assert read_points(self.temp_dir / "z.csv")["columns"] == ["z0", "z1", "z2"]
        with pytest.raises(DataValidationError):
            write_points(self.temp_dir / "bad.csv", np.zeros((2, 3)), columns=["a"])

    def test_header_only(self):
        path = self.temp_dir / "empty.csv"
        path.write_text("x0,x1\n")
        assert read_points(path)["points"].shape == (0, 2)

    def test_malformed(self):
        ragged = self.temp_dir / "ragged.csv"
        ragged.write_text("x0,x1\n1.0\n")
        text = self.temp_dir / "text.csv"
        text.write_text("x0\nabc\n")
        empty = self.temp_dir / "nothing.csv"
        empty.write_text("")
        for path in (ragged, text, empty):
            with pytest.raises(DataValidationError):
                read_points(path)

    def test_loader(self):
        path = self.temp_dir / "p.csv"
        loader = PointsLoader(path)
        assert loader.validate({"points": np.ones((3, 2))})
        assert not loader.validate({"points": np.array([[np.nan]])})
        assert not loader.validate({"points": np.ones(3)})
        loader.save({"points": np.ones((3, 2)), "columns": ["a", "b"]})
        assert loader.load()["columns"] == ["a", "b"]
        with pytest.raises(FileNotFoundError):
            PointsLoader(self.temp_dir / "missing.csv").load()


class TestFormatDetection:
    """Test cases for suffix and content detection."""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_detect(self):
        assert detect_format("a.ppm") is FormatType.PPM
        assert detect_format("points.csv") is FormatType.POINTS
        assert detect_format("run/final.lfmt") is FormatType.RECORDS
        assert detect_format("ref.stats") is FormatType.RECORDS
        with pytest.raises(ValueError):
            detect_format("image.png")

    def test_loader_for(self):
        assert isinstance(loader_for("x.ppm"), PPMLoader)
        assert isinstance(loader_for("x.bin", FormatType.RECORDS), RecordsLoader)
        assert isinstance(loader_for("x.csv"), PointsLoader)

    def test_detect_by_content(self):
        records = self.temp_dir / "run.bin"
        write_records(records, RecordFile("", {"x": np.zeros(1)}))
        image = self.temp_dir / "face.img"
        image.write_bytes(encode_ppm(np.zeros((2, 2, 3), dtype=np.uint8)))
        other = self.temp_dir / "notes.txt"
        other.write_text("hello")
        assert detect_format(records) is FormatType.RECORDS
        assert detect_format(image) is FormatType.PPM
        assert isinstance(loader_for(records), RecordsLoader)
        with pytest.raises(ValueError):
            detect_format(other)
