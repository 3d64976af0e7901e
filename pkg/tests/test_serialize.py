import struct

import numpy as np
import pytest

from freqforensics.errors import FormatError, ParameterError
from freqforensics.serialize import (
    MAGIC,
    matrix_from_bytes,
    matrix_to_bytes,
    read_matrix,
    render_heatmap,
    save_heatmap_png,
    write_csv,
    write_matrix,
    write_reduced_csv,
    write_spectrum_csv,
)


class TestBinaryFormat:
    def test_golden_bytes(self):
        matrix = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        data = matrix_to_bytes(matrix)
        expected = MAGIC + struct.pack("<II", 3, 2)
        for v in (1.0, 2.0, 3.0, 4.0, 5.0, 6.0):
            expected += struct.pack("<d", v)
        assert data == expected
        assert len(MAGIC) == 16

    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = rng.standard_normal((7, 5)) * 1e18 + rng.random((7, 5)) * 1e-18
        path = tmp_path / "m.bin"
        write_matrix(path, matrix)
        back = read_matrix(path)
        assert back.shape == matrix.shape
        assert np.array_equal(back, matrix)
        assert matrix_to_bytes(back) == matrix_to_bytes(matrix)

    def test_1d_stored_as_single_row(self):
        back = matrix_from_bytes(matrix_to_bytes(np.arange(4.0)))
        assert back.shape == (1, 4)

    def test_bad_magic(self):
        data = b"X" * 16 + struct.pack("<II", 1, 1) + struct.pack("<d", 0.0)
        with pytest.raises(FormatError):
            matrix_from_bytes(data)

    def test_truncation(self):
        data = matrix_to_bytes(np.ones((2, 2)))
        with pytest.raises(FormatError):
            matrix_from_bytes(data[:-1])
        with pytest.raises(FormatError):
            matrix_from_bytes(data[:10])

    def test_3d_rejected(self):
        with pytest.raises(FormatError):
            matrix_to_bytes(np.zeros((2, 2, 2)))

    def test_no_temp_files_left(self, tmp_path):
        write_matrix(tmp_path / "a.bin", np.ones((2, 2)))
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.bin"]


class TestCsv:
    def test_write_csv_with_comments(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], [(1, 2), (3, 4)], comments={"note": "hi"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# note=hi"
        assert lines[1] == "a,b"
        assert lines[2] == "1,2"

    def test_spectrum_csv_full_precision(self, tmp_path):
        path = tmp_path / "s.csv"
        values = np.array([[1 / 3, 2e-17]])
        write_spectrum_csv(path, values, kind="dft_power")
        lines = path.read_text().splitlines()
        assert lines[0] == "# kind=dft_power"
        assert lines[1] == "row,col,value"
        parsed = [line.split(",") for line in lines[2:]]
        assert float(parsed[0][2]) == values[0, 0]
        assert float(parsed[1][2]) == values[0, 1]

    def test_reduced_csv(self, tmp_path):
        path = tmp_path / "r.csv"
        write_reduced_csv(path, np.array([5.0, 6.0]), normalization="norm-desc")
        text = path.read_text()
        assert "# normalization=norm-desc" in text
        assert "bin,value" in text
        assert "1,6.0" in text


class TestHeatmap:
    def test_log_mapping_endpoints(self):
        values = np.array([[1e-5, 1e-1, 1e-3]])
        out = render_heatmap(values, 1e-5, 1e-1, log10_scale=True)
        assert out.dtype == np.uint8
        assert out[0, 0] == 0
        assert out[0, 1] == 255
        assert out[0, 2] == 128  # geometric midpoint of the clip range

    def test_clipping(self):
        values = np.array([[1e-9, 1e9]])
        out = render_heatmap(values, 1e-5, 1e-1)
        assert out[0, 0] == 0 and out[0, 1] == 255

    def test_linear_mapping(self):
        out = render_heatmap(np.array([[0.0, 0.5, 1.0]]), 0.0, 1.0, log10_scale=False)
        assert list(out[0]) == [0, 128, 255]

    def test_bad_clip(self):
        with pytest.raises(ParameterError):
            render_heatmap(np.ones((1, 1)), 1.0, 1.0)
        with pytest.raises(ParameterError):
            render_heatmap(np.ones((1, 1)), 0.0, 1.0, log10_scale=True)

    def test_png_written(self, tmp_path):
        path = tmp_path / "h.png"
        save_heatmap_png(path, np.full((4, 4), 1e-3), 1e-5, 1e-1)
        from PIL import Image

        with Image.open(path) as img:
            assert img.size == (4, 4)
            assert img.mode == "L"
