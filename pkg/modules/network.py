# -*- coding: utf-8 -*-
# ======================================================================
# network.py ― 全結合エンコーダ／デコーダ（手書きの順伝播・逆伝播）
# ======================================================================
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from modules.errors import ValidationError
from modules.numerics import Rng, as_matrix

CHECKPOINT_FORMAT = "itl-ae-checkpoint"
CHECKPOINT_VERSION = 1


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"

    @classmethod
    def parse(cls, value: "Activation | str") -> "Activation":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValidationError(f"activation が不正です: {value!r} (有効: {valid})")


def _activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _activate_grad(kind: Activation, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # 活性化の微分（z: 前活性、a: 出力）
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - a * a
    if kind is Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        object.__setattr__(self, "activation", Activation.parse(self.activation))
        if int(self.in_dim) < 1 or int(self.out_dim) < 1:
            raise ValidationError(f"層の次元は 1 以上: {self.in_dim}→{self.out_dim}")

    def to_dict(self) -> Dict[str, Any]:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "activation": self.activation.value}


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ValidationError("層が 1 つもありません")
    for i in range(1, len(specs)):
        if specs[i - 1].out_dim != specs[i].in_dim:
            raise ValidationError(
                f"層 {i - 1}→{i} の次元が連結しません: out_dim={specs[i - 1].out_dim}, in_dim={specs[i].in_dim}"
            )


@dataclass
class NetworkParams:
    """層ごとの (weight: out×in, bias: out)。勾配も同じ形で表す。"""

    specs: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self) -> None:
        check_chain(self.specs)
        if not (len(self.specs) == len(self.weights) == len(self.biases)):
            raise ValidationError("specs / weights / biases の層数が一致しません")
        for i, (s, w, b) in enumerate(zip(self.specs, self.weights, self.biases)):
            if w.shape != (s.out_dim, s.in_dim) or b.shape != (s.out_dim,):
                raise ValidationError(
                    f"層 {i} の形状が不正です: weight={w.shape}, bias={b.shape}, spec={s.out_dim}×{s.in_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].out_dim

    def arrays(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "NetworkParams":
        return NetworkParams(list(self.specs), list(arrays[0::2]), list(arrays[1::2]))

    def copy(self) -> "NetworkParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layers": [
                {**s.to_dict(), "weight": w.tolist(), "bias": b.tolist()}
                for s, w, b in zip(self.specs, self.weights, self.biases)
            ]
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "NetworkParams":
        try:
            layers = d["layers"]
            specs = [LayerSpec(l["in_dim"], l["out_dim"], l["activation"]) for l in layers]
            weights = [np.asarray(l["weight"], dtype=np.float64).reshape(s.out_dim, s.in_dim) for l, s in zip(layers, specs)]
            biases = [np.asarray(l["bias"], dtype=np.float64).reshape(s.out_dim) for l, s in zip(layers, specs)]
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"ネットワーク定義の読み込みに失敗しました: {e}") from e
        return cls(specs, weights, biases)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)


# ----------------------------------------------------------------------
# アーキテクチャ
# ----------------------------------------------------------------------
def default_architecture(
    data_dim: int,
    latent_dim: int,
    hidden_sizes: Sequence[int] = (1000, 1000),
    *,
    hidden_activation: "Activation | str" = Activation.RELU,
    output_activation: "Activation | str" = Activation.IDENTITY,
) -> Tuple[List[LayerSpec], List[LayerSpec]]:
    """エンコーダ d→h…→latent とその鏡像デコーダ latent→…h→d"""
    hidden_activation = Activation.parse(hidden_activation)
    enc_dims = [data_dim, *hidden_sizes, latent_dim]
    dec_dims = enc_dims[::-1]

    def build(dims: List[int], last: Activation) -> List[LayerSpec]:
        n = len(dims) - 1
        return [
            LayerSpec(dims[i], dims[i + 1], last if i == n - 1 else hidden_activation)
            for i in range(n)
        ]

    return build(enc_dims, Activation.IDENTITY), build(dec_dims, Activation.parse(output_activation))


def init_params(specs: Sequence[LayerSpec], rng: Rng) -> NetworkParams:
    """He 初期化（ReLU 層は N(0, 2/in)、それ以外は N(0, 1/in)）。bias は 0。"""
    specs = list(specs)
    check_chain(specs)
    weights, biases = [], []
    for s in specs:
        gain = 2.0 if s.activation is Activation.RELU else 1.0
        weights.append(math.sqrt(gain / s.in_dim) * rng.normal((s.out_dim, s.in_dim)))
        biases.append(np.zeros(s.out_dim))
    return NetworkParams(specs, weights, biases)


# ----------------------------------------------------------------------
# 順伝播・逆伝播
# ----------------------------------------------------------------------
def forward(params: NetworkParams, x: Any) -> Tuple[np.ndarray, ForwardTrace]:
    x = as_matrix(x, "x")
    if x.shape[1] != params.input_dim:
        raise ValidationError(f"入力次元が一致しません: x={tuple(x.shape)}, in_dim={params.input_dim}")
    trace = ForwardTrace(inputs=x)
    a = x
    for s, w, b in zip(params.specs, params.weights, params.biases):
        z = a @ w.T + b
        a = _activate(s.activation, z)
        trace.pre_activations.append(z)
        trace.activations.append(a)
    return a, trace


def backward(
    params: NetworkParams, trace: ForwardTrace, grad_output: Any
) -> Tuple[NetworkParams, np.ndarray]:
    """Σ(output·grad_output) の各パラメータ・入力に対する勾配"""
    g = np.asarray(grad_output, dtype=np.float64)
    out = trace.activations[-1]
    if g.shape != out.shape:
        raise ValidationError(f"grad_output の形状が不正です: {g.shape} (期待値 {out.shape})")
    n_layers = len(params.specs)
    gw: List[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: List[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in reversed(range(n_layers)):
        s = params.specs[i]
        z, a = trace.pre_activations[i], trace.activations[i]
        dz = g * _activate_grad(s.activation, z, a)
        prev = trace.activations[i - 1] if i > 0 else trace.inputs
        gw[i] = dz.T @ prev
        gb[i] = dz.sum(axis=0)
        g = dz @ params.weights[i]
    return NetworkParams(list(params.specs), gw, gb), g


def mse_loss(x: Any, x_recon: Any) -> Tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    x_recon = np.asarray(x_recon, dtype=np.float64)
    if x.shape != x_recon.shape:
        raise ValidationError(f"形状が一致しません: x={x.shape}, x_recon={x_recon.shape}")
    diff = x_recon - x
    n = diff.size
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


# ----------------------------------------------------------------------
# チェックポイント（JSON、float は repr で書くのでビット一致で復元できる）
# ----------------------------------------------------------------------
def save_checkpoint(
    path: str | Path,
    encoder: NetworkParams,
    decoder: NetworkParams,
    meta: Dict[str, Any] | None = None,
) -> Path:
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "encoder": encoder.to_dict(),
        "decoder": decoder.to_dict(),
        "meta": meta or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc), encoding="utf-8")
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Tuple[NetworkParams, NetworkParams, Dict[str, Any]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"チェックポイントが JSON として読めません: {path} ({e})") from e
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"チェックポイント形式が不正です: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"未対応のチェックポイント version: {doc.get('version')}")
    return (
        NetworkParams.from_dict(doc["encoder"]),
        NetworkParams.from_dict(doc["decoder"]),
        doc.get("meta", {}),
    )
