# -*- coding: utf-8 -*-
# ======================================================================
# evaluation.py ― Parzen 対数尤度による生成モデル評価
# ======================================================================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from modules.errors import ValidationError
from modules.itl_estimators import KernelWidth, as_width
from modules.network import NetworkParams, forward
from modules.numerics import Rng, as_matrix, check_same_cols, pairwise_sq_dists, row_log_sum_exp
from modules.priors import PriorSpec, sample_prior

logger = logging.getLogger(__name__)

# 784 次元 × 1 万件でもメモリに収まるよう、テスト側を分割して計算する
_BLOCK_ROWS = 512


@dataclass(frozen=True)
class LikelihoodReport:
    mean_ll: float
    std_err: float
    sigma: float
    n_generated: int
    n_test: int

    def __post_init__(self) -> None:
        if self.n_generated < 1 or self.n_test < 1 or not self.sigma > 0:
            raise ValidationError(
                f"LikelihoodReport が不正です: n_generated={self.n_generated}, n_test={self.n_test}, sigma={self.sigma}"
            )

    def to_dict(self) -> Dict[str, Any]:
        # 単位は nats/サンプル。Parzen 推定による値であることをキー名で明示する
        return {
            "parzen_mean_log_likelihood": self.mean_ll,
            "std_error": self.std_err,
            "sigma": self.sigma,
            "n_generated": self.n_generated,
            "n_test": self.n_test,
        }


# ----------------------------------------------------------------------
# 生成
# ----------------------------------------------------------------------
def generate(dec: NetworkParams, prior: PriorSpec, n: int, rng: Rng) -> np.ndarray:
    if prior.dim != dec.input_dim:
        raise ValidationError(f"prior dim={prior.dim} がデコーダ入力 {dec.input_dim} と一致しません")
    z = sample_prior(prior, n, rng)
    out, _ = forward(dec, z)
    return out


def interpolate_latent(a: Sequence[float], b: Sequence[float], k: int) -> np.ndarray:
    """a→b の線分上に k 点（両端を含む）"""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"walk の端点の次元が一致しません: {a.shape[0]} vs {b.shape[0]}")
    if k < 2:
        raise ValidationError(f"walk の点数 k は 2 以上: {k}")
    t = np.linspace(0.0, 1.0, k)[:, None]
    return (1.0 - t) * a[None, :] + t * b[None, :]


# ----------------------------------------------------------------------
# Parzen 対数尤度
# ----------------------------------------------------------------------
def per_sample_log_likelihood(test: Any, generated: Any, w: "KernelWidth | float") -> np.ndarray:
    w = as_width(w)
    test = as_matrix(test, "test")
    generated = as_matrix(generated, "generated")
    check_same_cols(test, generated)
    n, d = generated.shape
    s = w.sigma
    const = -math.log(n) - 0.5 * d * math.log(2.0 * math.pi) - d * math.log(s)
    out = np.empty(test.shape[0])
    for start in range(0, test.shape[0], _BLOCK_ROWS):
        block = test[start : start + _BLOCK_ROWS]
        sq = pairwise_sq_dists(block, generated)
        out[start : start + _BLOCK_ROWS] = row_log_sum_exp(-sq / (2.0 * s * s)) + const
    return out


def parzen_log_likelihood(test: Any, generated: Any, w: "KernelWidth | float") -> LikelihoodReport:
    ll = per_sample_log_likelihood(test, generated, w)
    m = ll.shape[0]
    std_err = float(np.std(ll, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return LikelihoodReport(
        mean_ll=float(np.mean(ll)),
        std_err=std_err,
        sigma=as_width(w).sigma,
        n_generated=as_matrix(generated, "generated").shape[0],
        n_test=m,
    )


def select_sigma(
    validation: Any, generated: Any, grid: Sequence[float]
) -> Tuple[float, List[Tuple[float, float]]]:
    """検証データの平均対数尤度が最大の σ。同点は小さい σ を優先。"""
    if len(grid) == 0:
        raise ValidationError("sigma グリッドが空です")
    widths = sorted(as_width(s).sigma for s in grid)
    curve: List[Tuple[float, float]] = []
    best_sigma, best_ll = widths[0], -math.inf
    for s in widths:
        mean_ll = float(np.mean(per_sample_log_likelihood(validation, generated, s)))
        curve.append((s, mean_ll))
        logger.debug(f"sigma={s:.6g} mean_ll={mean_ll:.6g}")
        if mean_ll > best_ll:
            best_sigma, best_ll = s, mean_ll
    logger.info(f"選択された sigma={best_sigma:.6g} (validation mean_ll={best_ll:.6g})")
    return best_sigma, curve


def silverman_sigma(x: Any) -> float:
    """Silverman の経験則による σ の初期値（自動適用はしない）"""
    x = as_matrix(x, "x")
    n, d = x.shape
    std = float(np.mean(np.std(x, axis=0, ddof=1))) if n > 1 else 0.0
    if not std > 0:
        raise ValidationError("分散が 0 のため Silverman の σ を計算できません")
    return std * (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))


def default_sigma_grid(lo: float = 0.05, hi: float = 1.0, count: int = 20) -> List[float]:
    if not (0 < lo <= hi) or count < 1:
        raise ValidationError(f"sigma グリッドの指定が不正です: [{lo}, {hi}], count={count}")
    if count == 1:
        return [float(lo)]
    return np.geomspace(lo, hi, count).tolist()


def sigma_curve_frame(curve: Sequence[Tuple[float, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(curve), columns=["sigma", "mean_ll"])


def write_sigma_curve(path: str | Path, curve: Sequence[Tuple[float, float]]) -> Path:
    path = Path(path)
    sigma_curve_frame(curve).to_csv(path, index=False)
    return path


def evaluate_parzen_protocol(
    dec: NetworkParams,
    prior: PriorSpec,
    test: Any,
    validation: Any,
    grid: Sequence[float],
    n_generated: int,
    rng: Rng,
) -> Tuple[LikelihoodReport, List[Tuple[float, float]]]:
    """生成 → 検証データで σ 選択 → テストデータの対数尤度"""
    generated = generate(dec, prior, n_generated, rng)
    sigma, curve = select_sigma(validation, generated, grid)
    return parzen_log_likelihood(test, generated, sigma), curve
