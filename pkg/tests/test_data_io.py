import gzip
import math
import struct

import numpy as np
import pandas as pd
import pytest

from modules.data_io import (
    DatasetHandle,
    append_metrics_jsonl,
    load_samples,
    make_synthetic,
    read_csv_samples,
    read_idx,
    read_idx_array,
    read_metrics_jsonl,
    write_csv_samples,
    write_idx,
    write_metrics_jsonl,
    write_metrics_workbook,
)
from modules.errors import IdxElementTypeError, IdxMagicError, IdxTruncatedError, ValidationError
from modules.numerics import Rng


# ----------------------------------------------------------------------
# IDX
# ----------------------------------------------------------------------
def _idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    header = struct.pack(">I3I", 0x00000803, *images.shape)
    path.write_bytes(header + images.tobytes())
    return path


def test_read_idx_scales_pixels(tmp_path):
    images = np.array([[[0, 255], [128, 64]], [[1, 2], [3, 4]]])
    handle = read_idx(_idx_images(tmp_path / "img.idx", images))
    assert handle.data.shape == (2, 4)
    np.testing.assert_allclose(handle.data[0], [0.0, 1.0, 128 / 255, 64 / 255], rtol=1e-15)
    assert handle.labels is None


def test_read_idx_with_labels_and_gzip(tmp_path):
    images = np.arange(3 * 2 * 2).reshape(3, 2, 2)
    raw = _idx_images(tmp_path / "img.idx", images).read_bytes()
    gz = tmp_path / "img.idx.gz"
    with gzip.open(gz, "wb") as f:
        f.write(raw)
    labels = tmp_path / "lab.idx"
    labels.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([7, 1, 4]))
    handle = read_idx(gz, labels)
    assert handle.n == 3 and handle.dim == 4
    np.testing.assert_array_equal(handle.labels, [7, 1, 4])


def test_read_idx_truncated_reports_byte_counts(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">I3I", 0x00000803, 2, 2, 2) + bytes(5))
    with pytest.raises(IdxTruncatedError, match="期待 24 バイト, 実際 21 バイト"):
        read_idx(path)


def test_read_idx_bad_magic(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">I", 0x12340803) + bytes(8))
    with pytest.raises(IdxMagicError):
        read_idx_array(path)


def test_read_idx_rejects_non_ubyte(tmp_path):
    path = tmp_path / "float.idx"
    path.write_bytes(struct.pack(">II", 0x00000D01, 1) + bytes(4))
    with pytest.raises(IdxElementTypeError, match="0x0d"):
        read_idx_array(path)


def test_idx_errors_are_validation_errors():
    assert issubclass(IdxTruncatedError, ValidationError)


def test_write_idx_round_trip(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    header, back = read_idx_array(write_idx(tmp_path / "a.idx", arr))
    assert header.dims == (2, 3, 4) and header.element_type == 0x08
    np.testing.assert_array_equal(back, arr)


def test_label_count_must_match(tmp_path):
    with pytest.raises(ValidationError, match="ラベル数"):
        DatasetHandle(np.zeros((3, 2)), np.array([1, 2]))


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------
def test_csv_round_trip(tmp_path, np_rng):
    batch = np_rng.normal(size=(20, 3)) * 1e3
    back = read_csv_samples(write_csv_samples(batch, tmp_path / "s.csv"))
    np.testing.assert_allclose(back, batch, rtol=1e-15, atol=0)
    assert pd.read_csv(tmp_path / "s.csv").columns.tolist() == ["c0", "c1", "c2"]


def test_csv_ragged_row_is_reported(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("c0,c1\n1,2\n3,4\n5,6\n7\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="row 4"):
        read_csv_samples(path)


def test_csv_non_numeric_and_empty(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("c0\n1\nabc\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="row 2"):
        read_csv_samples(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("c0,c1\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="データ行"):
        read_csv_samples(empty)
    with pytest.raises(ValidationError, match="ヘッダ"):
        read_csv_samples(_write(tmp_path / "h.csv", "x,y\n1,2\n"))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_samples_dispatches_on_extension(tmp_path):
    csv_path = _write(tmp_path / "pts.csv", "c0,c1\n0.5,1.5\n")
    np.testing.assert_array_equal(load_samples(csv_path).data, [[0.5, 1.5]])
    idx_path = _idx_images(tmp_path / "img.idx", np.full((1, 1, 2), 255))
    np.testing.assert_array_equal(load_samples(idx_path).data, [[1.0, 1.0]])


def test_write_csv_with_labels(tmp_path):
    path = write_csv_samples([[1.0, 2.0]], tmp_path / "codes.csv", labels=np.array([3]))
    df = pd.read_csv(path)
    assert df.columns.tolist() == ["c0", "c1", "label"]
    assert df["label"].tolist() == [3]


# ----------------------------------------------------------------------
# 合成データ
# ----------------------------------------------------------------------
def test_ring8_geometry():
    handle = make_synthetic("ring8", 800, 0.0, Rng(0))
    np.testing.assert_allclose(np.hypot(handle.data[:, 0], handle.data[:, 1]), 4.0, rtol=1e-12)
    assert sorted(set(handle.labels.tolist())) == list(range(8))
    angles = np.degrees(np.arctan2(handle.data[handle.labels == 2, 1], handle.data[handle.labels == 2, 0]))
    np.testing.assert_allclose(angles, 90.0, atol=1e-9)


def test_grid25_centers():
    handle = make_synthetic("grid25", 25, 0.0, Rng(0))
    assert {tuple(p) for p in handle.data.tolist()} == {
        (float(a), float(b)) for a in (-4, -2, 0, 2, 4) for b in (-4, -2, 0, 2, 4)
    }


def test_two_moons_moments():
    handle = make_synthetic("two_moons", 4000, 0.05, Rng(1))
    assert handle.data.shape == (4000, 2)
    # 二つの半月の重心は (0.5, 0.25) 付近
    assert handle.data[:, 0].mean() == pytest.approx(0.5, abs=0.05)
    assert handle.data[:, 1].mean() == pytest.approx(0.25, abs=0.05)
    upper = handle.data[handle.labels == 0]
    assert upper[:, 1].mean() == pytest.approx(2.0 / math.pi, abs=0.05)


def test_synthetic_is_deterministic_and_validates_name():
    a = make_synthetic("ring8", 50, 0.1, Rng(3, 4))
    b = make_synthetic("ring8", 50, 0.1, Rng(3, 4))
    np.testing.assert_array_equal(a.data, b.data)
    with pytest.raises(ValidationError, match="ring8"):
        make_synthetic("spiral", 10, 0.1, Rng(0))


# ----------------------------------------------------------------------
# メトリクス
# ----------------------------------------------------------------------
def test_metrics_jsonl_round_trip(tmp_path):
    path = tmp_path / "metrics.jsonl"
    rows = [{"epoch": 1, "recon_loss": 0.5}, {"epoch": 2, "recon_loss": 0.25}]
    write_metrics_jsonl(path, rows[:1])
    append_metrics_jsonl(path, rows[1])
    assert read_metrics_jsonl(path) == rows


def test_metrics_jsonl_bad_line(tmp_path):
    path = _write(tmp_path / "m.jsonl", '{"epoch": 1}\nnot json\n')
    with pytest.raises(ValidationError, match="2 行目"):
        read_metrics_jsonl(path)


def test_metrics_workbook_sheets(tmp_path):
    path = write_metrics_workbook(
        tmp_path / "report.xlsx",
        [{"epoch": 1, "recon_loss": 0.5, "divergence": 0.1, "cost": 0.6, "seconds": 0.0}],
        pd.DataFrame({"sigma": [0.1, 0.2], "mean_ll": [-3.0, -2.5]}),
        {"epochs": 1},
    )
    assert path.read_bytes()[:2] == b"PK"
