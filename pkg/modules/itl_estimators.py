# -*- coding: utf-8 -*-
# ======================================================================
# itl_estimators.py ― ITL 記述子とダイバージェンス（Parzen / 情報ポテンシャル）
# ======================================================================
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict

import numpy as np

from modules.errors import NumericalAbort, ValidationError
from modules.numerics import as_matrix, check_same_cols, pairwise_sq_dists

_BLOCK_ROWS = 1024


class DivergenceKind(str, Enum):
    EUCLIDEAN = "euclidean"
    CAUCHY_SCHWARZ = "cauchy_schwarz"

    @classmethod
    def parse(cls, value: "DivergenceKind | str") -> "DivergenceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"ed": "euclidean", "cs": "cauchy_schwarz", "cauchyschwarz": "cauchy_schwarz"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValidationError(f"divergence の種類が不正です: {value!r} (有効: {valid})")


@dataclass(frozen=True)
class KernelWidth:
    """カーネルサイズ σ。ポテンシャルでは σ√2 に膨らませて使う。"""

    sigma: float

    def __post_init__(self) -> None:
        s = float(self.sigma)
        if not (math.isfinite(s) and s > 0):
            raise ValidationError(f"sigma は正の有限値が必要です: {self.sigma}")
        object.__setattr__(self, "sigma", s)

    @property
    def potential_sigma(self) -> float:
        return self.sigma * math.sqrt(2.0)


def as_width(w: "KernelWidth | float") -> KernelWidth:
    return w if isinstance(w, KernelWidth) else KernelWidth(float(w))


@dataclass(frozen=True)
class DivergenceReport:
    kind: DivergenceKind
    value: float
    v_x: float
    v_y: float
    v_xy: float

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


# ----------------------------------------------------------------------
# カーネル・Parzen
# ----------------------------------------------------------------------
def _kernel_from_sq_dists(sq: np.ndarray, s: float, d: int) -> np.ndarray:
    # (2π)^(-d/2) s^(-d) exp(-r²/(2s²))
    log_norm = -0.5 * d * math.log(2.0 * math.pi) - d * math.log(s)
    return np.exp(log_norm - sq / (2.0 * s * s))


def _gram(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    return _kernel_from_sq_dists(pairwise_sq_dists(a, b), s, a.shape[1])


def _kernel_mean(a: np.ndarray, b: np.ndarray, s: float) -> float:
    # 行ブロックごとに和を取る（1 万件同士でも N×M 行列を一度に持たない）
    total = 0.0
    for start in range(0, a.shape[0], _BLOCK_ROWS):
        block = a[start : start + _BLOCK_ROWS]
        total += float(_kernel_from_sq_dists(pairwise_sq_dists(block, b), s, a.shape[1]).sum())
    return total / (a.shape[0] * b.shape[0])


def gaussian_kernel_matrix(a: Any, b: Any, w: "KernelWidth | float") -> np.ndarray:
    w = as_width(w)
    same = a is b
    a = as_matrix(a, "a")
    b = a if same else as_matrix(b, "b")
    check_same_cols(a, b)
    return _gram(a, b, w.sigma)


def parzen_pdf(query: Any, data: Any, w: "KernelWidth | float") -> np.ndarray:
    """Parzen 窓による密度推定値（query の各行）"""
    k = gaussian_kernel_matrix(query, data, w)
    return k.mean(axis=1)


# ----------------------------------------------------------------------
# 情報ポテンシャル・エントロピー
# ----------------------------------------------------------------------
def information_potential(x: Any, w: "KernelWidth | float") -> float:
    """V̂(X) = (1/N²) ΣΣ G_{σ√2}(x_j − x_i)。対角項 (i=j) を含む。"""
    w = as_width(w)
    x = as_matrix(x, "x")
    return _kernel_mean(x, x, w.potential_sigma)


def cross_information_potential(x: Any, y: Any, w: "KernelWidth | float") -> float:
    w = as_width(w)
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    check_same_cols(x, y)
    return _kernel_mean(x, y, w.potential_sigma)


def renyi_quadratic_entropy(x: Any, w: "KernelWidth | float") -> float:
    return -math.log(information_potential(x, w))


def renyi_cross_entropy(x: Any, y: Any, w: "KernelWidth | float") -> float:
    return -math.log(cross_information_potential(x, y, w))


# ----------------------------------------------------------------------
# ダイバージェンス
# ----------------------------------------------------------------------
def _checked_pair(x: Any, y: Any) -> tuple[np.ndarray, np.ndarray]:
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    check_same_cols(x, y)
    return x, y


def _potential_values(x: np.ndarray, y: np.ndarray, s: float) -> tuple[float, float, float]:
    return _kernel_mean(x, x, s), _kernel_mean(y, y, s), _kernel_mean(x, y, s)


def euclidean_divergence(x: Any, y: Any, w: "KernelWidth | float") -> DivergenceReport:
    w = as_width(w)
    x, y = _checked_pair(x, y)
    v_x, v_y, v_xy = _potential_values(x, y, w.potential_sigma)
    return DivergenceReport(DivergenceKind.EUCLIDEAN, v_x + v_y - 2.0 * v_xy, v_x, v_y, v_xy)


def cauchy_schwarz_divergence(x: Any, y: Any, w: "KernelWidth | float") -> DivergenceReport:
    w = as_width(w)
    x, y = _checked_pair(x, y)
    v_x, v_y, v_xy = _potential_values(x, y, w.potential_sigma)
    if v_xy <= 0.0:
        # 交差カーネルが全てアンダーフロー
        value = math.inf
    else:
        value = math.log(v_x) + math.log(v_y) - 2.0 * math.log(v_xy)
    return DivergenceReport(DivergenceKind.CAUCHY_SCHWARZ, value, v_x, v_y, v_xy)


def divergence(kind: "DivergenceKind | str", x: Any, y: Any, w: "KernelWidth | float") -> DivergenceReport:
    if DivergenceKind.parse(kind) is DivergenceKind.EUCLIDEAN:
        return euclidean_divergence(x, y, w)
    return cauchy_schwarz_divergence(x, y, w)


def _potential_grad(k: np.ndarray, x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    # Σ_j K_ij (x_i − y_j) に −1/s² を掛けたもの（正規化前）
    return -(k.sum(axis=1)[:, None] * x - k @ y) / (s * s)


def divergence_grad_x(kind: "DivergenceKind | str", x: Any, y: Any, w: "KernelWidth | float") -> np.ndarray:
    """∂D/∂x_i（N×d）。∂G_s(u)/∂u = −G_s(u)·u/s² をポテンシャル経由で適用。"""
    kind = DivergenceKind.parse(kind)
    w = as_width(w)
    x, y = _checked_pair(x, y)
    s = w.potential_sigma
    kxx = _gram(x, x, s)
    kxy = _gram(x, y, s)
    n, m = x.shape[0], y.shape[0]
    # V(X) は x_i が両引数に現れるので 2 倍
    dv_x = 2.0 * _potential_grad(kxx, x, x, s) / (n * n)
    dv_xy = _potential_grad(kxy, x, y, s) / (n * m)
    if kind is DivergenceKind.EUCLIDEAN:
        return dv_x - 2.0 * dv_xy
    v_xy = float(kxy.mean())
    if v_xy <= 0.0:
        raise NumericalAbort("cauchy_schwarz: 交差情報ポテンシャルが 0 にアンダーフローしました")
    return dv_x / float(kxx.mean()) - 2.0 * dv_xy / v_xy
