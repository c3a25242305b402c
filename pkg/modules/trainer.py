# -*- coding: utf-8 -*-
# ======================================================================
# trainer.py ― ITL-AE 学習ループ（cost = L(x, x̃) + λ·D(E(x), P)）
# ======================================================================
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import NumericalAbort, ValidationError
from modules.itl_estimators import DivergenceKind, KernelWidth, divergence, divergence_grad_x
from modules.network import (
    LayerSpec,
    NetworkParams,
    backward,
    forward,
    init_params,
    mse_loss,
    save_checkpoint,
)
from modules.numerics import STREAM_INIT, STREAM_PRIOR, STREAM_SHUFFLE, Rng, as_matrix
from modules.priors import PriorSpec, sample_prior

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# 設定
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("adam", "sgd"):
            raise ValidationError(f"optimizer は adam / sgd のいずれか: {self.kind!r}")
        if not self.lr > 0:
            raise ValidationError(f"lr は正の値が必要です: {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum は [0, 1) の範囲: {self.momentum}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError(f"beta1/beta2 は [0, 1) の範囲: {self.beta1}, {self.beta2}")
        if not self.eps > 0:
            raise ValidationError(f"eps は正の値が必要です: {self.eps}")


@dataclass(frozen=True)
class TrainConfig:
    reg_lambda: float = 1.0
    divergence: DivergenceKind = DivergenceKind.EUCLIDEAN
    sigma: KernelWidth = KernelWidth(1.0)
    prior: PriorSpec = field(default_factory=PriorSpec)
    batch_size: int = 64
    epochs: int = 10
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    prior_batch_size: Optional[int] = None
    checkpoint_every: int = 0
    log_seconds: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "divergence", DivergenceKind.parse(self.divergence))
        if not isinstance(self.sigma, KernelWidth):
            object.__setattr__(self, "sigma", KernelWidth(self.sigma))
        if self.prior_batch_size in (None, 0):
            object.__setattr__(self, "prior_batch_size", self.batch_size)
        if not (math.isfinite(self.reg_lambda) and self.reg_lambda >= 0):
            raise ValidationError(f"lambda は 0 以上: {self.reg_lambda}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size は 1 以上: {self.batch_size}")
        if self.prior_batch_size < 1:
            raise ValidationError(f"prior_batch_size は 1 以上: {self.prior_batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs は 1 以上: {self.epochs}")
        if self.checkpoint_every < 0:
            raise ValidationError(f"checkpoint_every は 0 以上: {self.checkpoint_every}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.reg_lambda,
            "divergence": self.divergence.value,
            "sigma": self.sigma.sigma,
            "prior": self.prior.to_dict(),
            "batch_size": self.batch_size,
            "prior_batch_size": self.prior_batch_size,
            "epochs": self.epochs,
            "optimizer": asdict(self.optimizer),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class StepMetrics:
    recon_loss: float
    divergence: float
    cost: float


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    recon_loss: float
    divergence: float
    cost: float
    seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ----------------------------------------------------------------------
# オプティマイザ
# ----------------------------------------------------------------------
class SGDOptimizer:
    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity: List[np.ndarray] | None = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        if self.momentum == 0.0:
            return [p - self.lr * g for p, g in zip(params, grads)]
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        self.velocity = [self.momentum * v - self.lr * g for v, g in zip(self.velocity, grads)]
        return [p + v for p, v in zip(params, self.velocity)]


class AdamOptimizer:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: List[np.ndarray] | None = None
        self.v: List[np.ndarray] | None = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def make_optimizer(cfg: OptimizerConfig) -> SGDOptimizer | AdamOptimizer:
    if cfg.kind == "sgd":
        return SGDOptimizer(cfg.lr, cfg.momentum)
    return AdamOptimizer(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


# ----------------------------------------------------------------------
# 1 ステップ
# ----------------------------------------------------------------------
def _check_finite(value: Any, term: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalAbort(f"非有限値を検出しました: {term}")


def compute_cost_and_grads(
    enc: NetworkParams,
    dec: NetworkParams,
    x: np.ndarray,
    prior_batch: np.ndarray,
    cfg: TrainConfig,
) -> Tuple[StepMetrics, NetworkParams, NetworkParams]:
    """コストと融合勾配。デコーダは再構成経路のみ、エンコーダは再構成 + λ·∂D/∂z。"""
    z, enc_trace = forward(enc, x)
    # 発散は検証エラーではなく NumericalAbort（項名付き）
    _check_finite(z, "latent codes")
    x_recon, dec_trace = forward(dec, z)
    _check_finite(x_recon, "reconstruction")
    recon, g_recon = mse_loss(x, x_recon)
    _check_finite(recon, "recon_loss")

    dec_grads, g_z = backward(dec, dec_trace, g_recon)
    div = divergence(cfg.divergence, z, prior_batch, cfg.sigma).value
    if cfg.reg_lambda > 0:
        _check_finite(div, "divergence")
        g_div = divergence_grad_x(cfg.divergence, z, prior_batch, cfg.sigma)
        _check_finite(g_div, "divergence gradient")
        g_z = g_z + cfg.reg_lambda * g_div
        cost = recon + cfg.reg_lambda * div
    else:
        # λ=0 ではダイバージェンスは記録のみ
        if not math.isfinite(div):
            logger.warning(f"divergence が非有限値です ({div})。λ=0 のため nan として記録します")
            div = math.nan
        cost = recon
    enc_grads, _ = backward(enc, enc_trace, g_z)

    if not dec_grads.all_finite():
        raise NumericalAbort("非有限値を検出しました: decoder gradient")
    if not enc_grads.all_finite():
        raise NumericalAbort("非有限値を検出しました: encoder gradient")
    return StepMetrics(recon, div, cost), enc_grads, dec_grads


def train_step(
    enc: NetworkParams,
    dec: NetworkParams,
    x: Any,
    cfg: TrainConfig,
    rng: Rng,
    opt_state: SGDOptimizer | AdamOptimizer,
    prior_batch: Optional[np.ndarray] = None,
) -> Tuple[NetworkParams, NetworkParams, StepMetrics]:
    x = as_matrix(x, "x")
    if prior_batch is None:
        prior_batch = sample_prior(cfg.prior, cfg.prior_batch_size, rng)
    if prior_batch.shape[1] != enc.output_dim:
        raise ValidationError(f"prior dim={prior_batch.shape[1]} が潜在次元 {enc.output_dim} と一致しません")
    metrics, enc_grads, dec_grads = compute_cost_and_grads(enc, dec, x, prior_batch, cfg)

    n_enc = len(enc.arrays())
    updated = opt_state.step(enc.arrays() + dec.arrays(), enc_grads.arrays() + dec_grads.arrays())
    return enc.with_arrays(updated[:n_enc]), dec.with_arrays(updated[n_enc:]), metrics


# ----------------------------------------------------------------------
# 学習ループ
# ----------------------------------------------------------------------
def _warn_degenerate(cfg: TrainConfig, latent_dim: int) -> None:
    if cfg.reg_lambda > 0 and cfg.batch_size < 2:
        logger.warning("batch_size < 2 では 1 サンプルのダイバージェンスになり推定が退化します")
    if latent_dim > 8 and cfg.batch_size < 256:
        logger.warning(
            f"latent_dim={latent_dim} に対して batch_size={cfg.batch_size} は小さく、推定が不安定になります"
        )


def train(
    data: Any,
    cfg: TrainConfig,
    enc_specs: Sequence[LayerSpec],
    dec_specs: Sequence[LayerSpec],
    *,
    checkpoint_path: str | Path | None = None,
    checkpoint_meta: Dict[str, Any] | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> Tuple[NetworkParams, NetworkParams, List[EpochMetrics]]:
    """エポック × ⌈N/batch⌉ ステップを実行する。

    乱数は (初期化, シャッフル, 事前分布) の 3 ストリームに分離する。
    λ=0 のとき事前分布ストリームは学習経路に影響しない。
    """
    x_all = as_matrix(getattr(data, "data", data), "data")
    n = x_all.shape[0]
    if enc_specs[0].in_dim != x_all.shape[1]:
        raise ValidationError(f"データ次元 {x_all.shape[1]} がエンコーダ入力 {enc_specs[0].in_dim} と一致しません")
    if dec_specs[-1].out_dim != x_all.shape[1]:
        raise ValidationError(f"データ次元 {x_all.shape[1]} がデコーダ出力 {dec_specs[-1].out_dim} と一致しません")
    if enc_specs[-1].out_dim != cfg.prior.dim:
        raise ValidationError(f"prior dim={cfg.prior.dim} が潜在次元 {enc_specs[-1].out_dim} と一致しません")
    _warn_degenerate(cfg, enc_specs[-1].out_dim)

    master = Rng(cfg.seed)
    init_rng = master.derive(STREAM_INIT)
    shuffle_rng = master.derive(STREAM_SHUFFLE)
    prior_rng = master.derive(STREAM_PRIOR)

    enc = init_params(enc_specs, init_rng)
    dec = init_params(dec_specs, init_rng)
    opt = make_optimizer(cfg.optimizer)
    history: List[EpochMetrics] = []

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            enc, dec, m = train_step(enc, dec, x_all[idx], cfg, prior_rng, opt)
            sums += len(idx) * np.array([m.recon_loss, m.divergence, m.cost])
        recon, div, cost = (sums / n).tolist()
        seconds = time.perf_counter() - t0 if cfg.log_seconds else 0.0
        em = EpochMetrics(epoch, recon, div, cost, seconds)
        history.append(em)
        logger.info(f"epoch {epoch}/{cfg.epochs} recon={recon:.6g} divergence={div:.6g} cost={cost:.6g}")
        if on_epoch is not None:
            on_epoch(em)
        if checkpoint_path and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, enc, dec, {**(checkpoint_meta or {}), "epoch": epoch})

    if checkpoint_path:
        save_checkpoint(checkpoint_path, enc, dec, {**(checkpoint_meta or {}), "epoch": cfg.epochs})
    return enc, dec, history
