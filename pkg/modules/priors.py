# -*- coding: utf-8 -*-
# ======================================================================
# priors.py ― 潜在コードに課す事前分布のサンプラー
# ======================================================================
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from modules.errors import ValidationError
from modules.numerics import Rng, normal_draws, uniform_draws


class PriorKind(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    SWISS_ROLL = "swiss_roll"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value: "PriorKind | str") -> "PriorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = {"swissroll": "swiss_roll", "laplace": "laplacian", "normal": "gaussian"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValidationError(f"prior の種類が不正です: {value!r} (有効: {valid})")


# 種類ごとの既定 scale（Gaussian は std 5、Laplacian は b=1、SwissRoll は 1）
_DEFAULT_SCALE = {
    PriorKind.GAUSSIAN: 5.0,
    PriorKind.LAPLACIAN: 1.0,
    PriorKind.SWISS_ROLL: 1.0,
    PriorKind.UNIFORM: 1.0,
}


@dataclass(frozen=True)
class PriorSpec:
    kind: PriorKind = PriorKind.GAUSSIAN
    dim: int = 2
    location: float = 0.0
    scale: Optional[float] = None
    turns: float = 1.5
    noise_std: float = 0.05

    def __post_init__(self) -> None:
        kind = PriorKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.scale is None:
            object.__setattr__(self, "scale", _DEFAULT_SCALE[kind])
        self.validate()

    def validate(self) -> None:
        if int(self.dim) < 1:
            raise ValidationError(f"prior dim は 1 以上: {self.dim}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"prior scale は正の値が必要です: {self.scale}")
        if not math.isfinite(self.location):
            raise ValidationError(f"prior location が不正です: {self.location}")
        if self.kind is PriorKind.SWISS_ROLL:
            if self.dim != 2:
                raise ValidationError(f"swiss_roll は dim=2 のみ対応: dim={self.dim}")
            if not self.turns > 0:
                raise ValidationError(f"swiss_roll turns は正の値が必要です: {self.turns}")
            if not self.noise_std >= 0:
                raise ValidationError(f"swiss_roll noise_std は 0 以上: {self.noise_std}")

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "PriorSpec":
        return cls(**d)


def sample_prior(spec: PriorSpec, n: int, rng: Rng) -> np.ndarray:
    if n < 1:
        raise ValidationError(f"サンプル数 n は 1 以上: {n}")
    spec.validate()
    d = spec.dim

    if spec.kind is PriorKind.GAUSSIAN:
        return normal_draws(rng, n, d, spec.location, spec.scale)

    if spec.kind is PriorKind.LAPLACIAN:
        # 逆CDF法: u ~ U(−½, ½)、|u| = ½ は log(0) になるので直前の値に丸める
        u = rng.uniform(-0.5, 0.5, (n, d))
        a = np.minimum(np.abs(u), np.nextafter(0.5, 0.0))
        return spec.location - spec.scale * np.sign(u) * np.log1p(-2.0 * a)

    if spec.kind is PriorKind.UNIFORM:
        return uniform_draws(rng, n, d, spec.location - spec.scale, spec.location + spec.scale)

    # swiss_roll: アルキメデス螺旋 r = scale·t
    t = rng.uniform(0.0, spec.turns * 2.0 * math.pi, (n,))
    pts = np.column_stack((spec.scale * t * np.cos(t), spec.scale * t * np.sin(t)))
    pts = pts + spec.location
    if spec.noise_std > 0:
        pts = pts + spec.noise_std * rng.normal((n, 2))
    return pts
