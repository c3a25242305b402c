# -*- coding: utf-8 -*-
# ======================================================================
# data_io.py ― データ読み込み（IDX / CSV）・合成データ・結果の書き出し
# ======================================================================
from __future__ import annotations

import csv
import gzip
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from modules.errors import (
    IdxElementTypeError,
    IdxMagicError,
    IdxTruncatedError,
    ValidationError,
)
from modules.numerics import Rng, as_matrix

IDX_UBYTE = 0x08
IDX_LABEL_MAGIC = 0x00000801
IDX_IMAGE_MAGIC = 0x00000803
SYNTHETIC_NAMES = ("ring8", "two_moons", "grid25")


@dataclass(frozen=True)
class IdxHeader:
    magic: int
    dims: Tuple[int, ...]

    @property
    def element_type(self) -> int:
        return (self.magic >> 8) & 0xFF

    @property
    def ndim(self) -> int:
        return self.magic & 0xFF


@dataclass(frozen=True)
class DatasetHandle:
    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", as_matrix(self.data, "data"))
        if self.labels is not None:
            labels = np.asarray(self.labels).ravel()
            if labels.shape[0] != self.data.shape[0]:
                raise ValidationError(
                    f"ラベル数 {labels.shape[0]} がサンプル数 {self.data.shape[0]} と一致しません"
                )
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


# ----------------------------------------------------------------------
# IDX（MNIST 形式、ビッグエンディアン）
# ----------------------------------------------------------------------
def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx_array(path: str | Path) -> Tuple[IdxHeader, np.ndarray]:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: ヘッダが不足しています (期待 4 バイト以上, 実際 {len(raw)} バイト)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic >> 16 != 0:
        raise IdxMagicError(f"{path}: magic が不正です (0x{magic:08x})")
    etype, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if etype != IDX_UBYTE:
        raise IdxElementTypeError(f"{path}: 未対応の要素型 0x{etype:02x}（0x08 unsigned byte のみ）")
    if ndim < 1:
        raise IdxMagicError(f"{path}: 次元数が 0 です (0x{magic:08x})")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxTruncatedError(
            f"{path}: ヘッダが不足しています (期待 {header_len} バイト, 実際 {len(raw)} バイト)"
        )
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims, dtype=np.int64))
    if len(raw) != expected:
        kind = "不足" if len(raw) < expected else "超過"
        raise IdxTruncatedError(
            f"{path}: データ長が{kind}しています (期待 {expected} バイト, 実際 {len(raw)} バイト)"
        )
    arr = np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(dims)
    return IdxHeader(magic, tuple(dims)), arr


def read_idx_labels(path: str | Path) -> np.ndarray:
    header, arr = read_idx_array(path)
    if header.ndim != 1:
        raise IdxMagicError(f"{path}: ラベルファイルは 1 次元が必要です (ndim={header.ndim})")
    return arr.astype(np.int64)


def read_idx(path: str | Path, labels_path: str | Path | None = None) -> DatasetHandle:
    """画像 IDX を N×(後続次元の積) に平坦化し、画素を /255 で [0,1] にする"""
    header, arr = read_idx_array(path)
    if header.ndim < 2:
        raise IdxMagicError(f"{path}: 画像ファイルは 2 次元以上が必要です (ndim={header.ndim})")
    data = arr.reshape(arr.shape[0], -1).astype(np.float64) / 255.0
    labels = read_idx_labels(labels_path) if labels_path is not None else None
    return DatasetHandle(data, labels)


def write_idx(path: str | Path, arr: np.ndarray) -> Path:
    arr = np.asarray(arr, dtype=np.uint8)
    path = Path(path)
    magic = (IDX_UBYTE << 8) | arr.ndim
    path.write_bytes(struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes())
    return path


# ----------------------------------------------------------------------
# CSV（ヘッダ c0,c1,...）
# ----------------------------------------------------------------------
def read_csv_samples(path: str | Path) -> np.ndarray:
    """行番号はデータ行の 1 始まり（ヘッダ行を除く）"""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValidationError(f"{path}: 空のファイルです")
    header = [h.strip() for h in rows[0]]
    expected = [f"c{i}" for i in range(len(header))]
    if header != expected:
        raise ValidationError(f"{path}: ヘッダは {','.join(expected)} の形式が必要です")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValidationError(f"{path}: データ行がありません")
    out = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {i} の列数が不正です (期待 {len(header)}, 実際 {len(r)})")
        for j, cell in enumerate(r):
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(f"{path}: row {i} 列 c{j} が数値ではありません: {cell!r}") from None
            if not math.isfinite(v):
                raise ValidationError(f"{path}: row {i} 列 c{j} が有限値ではありません: {cell!r}")
            out[i - 1, j] = v
    return out


def samples_frame(batch: Any, labels: Optional[np.ndarray] = None) -> pd.DataFrame:
    m = as_matrix(batch, "batch")
    df = pd.DataFrame(m, columns=[f"c{i}" for i in range(m.shape[1])])
    if labels is not None:
        df["label"] = np.asarray(labels).astype(np.int64)
    return df


def write_csv_samples(batch: Any, path: str | Path, labels: Optional[np.ndarray] = None) -> Path:
    path = Path(path)
    # 17 有効桁で書くので往復で一致する
    samples_frame(batch, labels).to_csv(path, index=False, float_format="%.17g")
    return path


def load_samples(path: str | Path, labels_path: str | Path | None = None) -> DatasetHandle:
    """拡張子で CSV / IDX を判別して読み込む"""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        if labels_path is not None:
            return DatasetHandle(read_csv_samples(p), read_idx_labels(labels_path))
        return DatasetHandle(read_csv_samples(p))
    return read_idx(p, labels_path)


# ----------------------------------------------------------------------
# 合成データ
# ----------------------------------------------------------------------
def make_synthetic(name: str, n: int, noise: float, rng: Rng) -> DatasetHandle:
    if name not in SYNTHETIC_NAMES:
        raise ValidationError(f"未知の合成データ名: {name!r} (有効: {', '.join(SYNTHETIC_NAMES)})")
    if n < 1:
        raise ValidationError(f"n は 1 以上: {n}")
    if noise < 0:
        raise ValidationError(f"noise は 0 以上: {noise}")

    if name == "ring8":
        # 半径 4 の円周上、45° 間隔の 8 クラスタ
        labels = np.arange(n) % 8
        angle = labels * (np.pi / 4.0)
        centers = 4.0 * np.column_stack((np.cos(angle), np.sin(angle)))
    elif name == "grid25":
        labels = np.arange(n) % 25
        grid = np.array([-4.0, -2.0, 0.0, 2.0, 4.0])
        centers = np.column_stack((grid[labels // 5], grid[labels % 5]))
    else:
        labels = np.arange(n) % 2
        t = rng.uniform(0.0, np.pi, (n,))
        upper = np.column_stack((np.cos(t), np.sin(t)))
        lower = np.column_stack((1.0 - np.cos(t), 0.5 - np.sin(t)))
        centers = np.where(labels[:, None] == 0, upper, lower)

    data = centers + noise * rng.normal((n, 2)) if noise > 0 else centers.astype(np.float64)
    return DatasetHandle(data, labels)


# ----------------------------------------------------------------------
# メトリクス（JSON-lines / Excel）
# ----------------------------------------------------------------------
def append_metrics_jsonl(path: str | Path, record: Dict[str, Any]) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record) + "\n")


def write_metrics_jsonl(path: str | Path, records: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    return path


def read_metrics_jsonl(path: str | Path) -> List[Dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}: {i} 行目が JSON として読めません ({e})") from e
    return out


def write_metrics_workbook(
    path: str | Path,
    metrics: List[Dict[str, Any]],
    sigma_curve: Optional[pd.DataFrame] = None,
    summary: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    with pd.ExcelWriter(path, engine="xlsxwriter") as writer:
        pd.DataFrame(metrics).to_excel(writer, sheet_name="metrics", index=False)
        if sigma_curve is not None:
            sigma_curve.to_excel(writer, sheet_name="sigma_curve", index=False)
        if summary:
            pd.DataFrame(list(summary.items()), columns=["item", "value"]).to_excel(
                writer, sheet_name="summary", index=False
            )
    return path
