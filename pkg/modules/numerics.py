# -*- coding: utf-8 -*-
# ======================================================================
# numerics.py ― 行列・乱数の基盤（float64 / PCG64）
# ======================================================================
from __future__ import annotations

from typing import Any

import numpy as np
from scipy.special import logsumexp

from modules.errors import ValidationError

# 乱数ストリームのオフセット（マスターシードから派生）
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_PRIOR = 2
STREAM_EVAL = 3
STREAM_DATA = 4


def as_matrix(values: Any, name: str = "matrix") -> np.ndarray:
    """2次元 float64 配列に変換して検証する。1次元入力は列ベクトル扱い。"""
    try:
        m = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name}: 数値行列に変換できません ({e})") from e
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValidationError(f"{name}: 2次元行列が必要です (ndim={m.ndim})")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"{name}: 空の行列です shape={m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name}: NaN/Inf を含みます")
    return m


def check_same_cols(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise ValidationError(
            f"次元が一致しません: {tuple(a.shape)} vs {tuple(b.shape)}"
        )


# ----------------------------------------------------------------------
# 距離・リダクション
# ----------------------------------------------------------------------
def pairwise_sq_dists(a: Any, b: Any) -> np.ndarray:
    """全ペアの二乗ユークリッド距離 N×M。

    ‖a‖² + ‖b‖² − 2a·b で計算し、丸め誤差による負値は 0 に切り上げる。
    a と b が同一配列なら対角を厳密に 0、結果を対称にする。
    """
    same = a is b
    a = as_matrix(a, "a")
    b = a if same else as_matrix(b, "b")
    check_same_cols(a, b)
    an = np.einsum("ij,ij->i", a, a)
    bn = an if same else np.einsum("ij,ij->i", b, b)
    d = an[:, None] + bn[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    if same:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d


def log_sum_exp(v: Any) -> float:
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("log_sum_exp: 空の入力です")
    return float(logsumexp(v))


def row_log_sum_exp(m: np.ndarray) -> np.ndarray:
    # 行ごとの log Σ exp
    return logsumexp(m, axis=1)


# ----------------------------------------------------------------------
# 乱数
# ----------------------------------------------------------------------
class Rng:
    """シード固定の PCG64 ラッパー。

    同じ (seed, stream) なら同じ乱数列を返す。スレッド間で共有しないこと。
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise ValidationError(f"seed は 64bit 符号なし整数: {seed}")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence([self.seed, self.stream])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def derive(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)

    def normal(self, size: tuple[int, ...]) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low: float, high: float, size: tuple[int, ...]) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


def normal_draws(rng: Rng, n: int, d: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if not std > 0:
        raise ValidationError(f"std は正の値が必要です: {std}")
    if n < 1 or d < 1:
        raise ValidationError(f"n, d は 1 以上: n={n}, d={d}")
    return mean + std * rng.normal((n, d))


def uniform_draws(rng: Rng, n: int, d: int, low: float, high: float) -> np.ndarray:
    if not high > low:
        raise ValidationError(f"uniform の範囲が不正です: [{low}, {high})")
    return rng.uniform(low, high, (n, d))
