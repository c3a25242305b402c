# utils.py

from __future__ import annotations

import math
from typing import Any, Dict, List, Sequence, Tuple

from modules.errors import ValidationError


def calc_training_summary(metrics: Sequence[Dict[str, Any]]) -> dict:
    """エポック指標から初期値・最終値・比率をまとめる（レポート用）"""
    try:
        first, last = metrics[0], metrics[-1]
        div0 = float(first["divergence"])
        rec0 = float(first["recon_loss"])

        divergence_ratio = round(float(last["divergence"]) / div0, 4) if div0 > 0 else 0
        recon_ratio = round(float(last["recon_loss"]) / rec0, 4) if rec0 > 0 else 0

        return {
            "epochs": int(last["epoch"]),
            "initial_recon_loss": rec0,
            "final_recon_loss": float(last["recon_loss"]),
            "initial_divergence": div0,
            "final_divergence": float(last["divergence"]),
            "final_cost": float(last["cost"]),
            "divergence_ratio": divergence_ratio,
            "recon_ratio": recon_ratio,
            "total_seconds": round(sum(float(m.get("seconds", 0.0)) for m in metrics), 3),
        }
    except Exception as e:
        return {
            "epochs": 0,
            "divergence_ratio": 0,
            "recon_ratio": 0,
            "error": str(e),
        }


def parse_vector(text: str) -> List[float]:
    """'0.5,-1' → [0.5, -1.0]"""
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"数値のカンマ区切りが必要です: {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise ValidationError(f"数値のカンマ区切りが必要です: {text!r}")
    return values


def parse_walk(a: str, b: str, k: str) -> Tuple[List[float], List[float], int]:
    # --walk A B K
    try:
        count = int(k)
    except ValueError:
        raise ValidationError(f"walk の点数 K は整数: {k!r}") from None
    return parse_vector(a), parse_vector(b), count
