# config.py
from __future__ import annotations

import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Tuple

from modules.errors import ValidationError
from modules.itl_estimators import DivergenceKind, KernelWidth
from modules.network import Activation, LayerSpec, default_architecture
from modules.priors import PriorKind, PriorSpec
from modules.trainer import OptimizerConfig, TrainConfig

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_logging_initialized = False


def init_logging(level: str = "INFO") -> None:
    """
    - エントリポイントの **最上段** で呼び出すだけで
      ・ルートロガーのハンドラ
      ・共通フォーマット
      を設定。
    - 2 回目以降の呼び出しはレベル変更のみ行い、ハンドラは重複させない。
    """
    global _logging_initialized
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ValidationError(f"log_level が不正です: {level!r}")
    if _logging_initialized:
        logging.getLogger().setLevel(numeric)
        return
    logging.basicConfig(level=numeric, format=_LOG_FORMAT)
    _logging_initialized = True


# ---------- 実行設定（フラットな TOML） ----------
# ファイル上のキー名 → フィールド名
_KEY_ALIASES = {"lambda": "reg_lambda"}
_DATASETS = ("ring8", "two_moons", "grid25", "idx", "csv")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs"
    log_level: str = "INFO"
    log_seconds: bool = True
    # データ
    dataset: str = "ring8"
    data_path: str = ""
    labels_path: str = ""
    n_samples: int = 2048
    data_noise: float = 0.1
    # アーキテクチャ
    latent_dim: int = 2
    hidden_sizes: List[int] = field(default_factory=lambda: [1000, 1000])
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    # 目的関数・事前分布
    reg_lambda: float = 1.0
    divergence: str = "euclidean"
    sigma: float = 1.0
    prior_kind: str = "gaussian"
    prior_location: float = 0.0
    prior_scale: float = 0.0
    prior_turns: float = 1.5
    prior_noise_std: float = 0.05
    # 最適化
    batch_size: int = 64
    prior_batch_size: int = 0
    epochs: int = 10
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 0
    # 評価
    eval_n_generated: int = 10000
    eval_sigma_grid: List[float] = field(default_factory=list)
    eval_sigma_min: float = 0.05
    eval_sigma_max: float = 1.0
    eval_sigma_count: int = 20
    eval_validation_fraction: float = 0.2

    # ---------- 変換 ----------
    def prior_spec(self) -> PriorSpec:
        return PriorSpec(
            kind=PriorKind.parse(self.prior_kind),
            dim=self.latent_dim,
            location=self.prior_location,
            scale=self.prior_scale if self.prior_scale > 0 else None,
            turns=self.prior_turns,
            noise_std=self.prior_noise_std,
        )

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            reg_lambda=self.reg_lambda,
            divergence=DivergenceKind.parse(self.divergence),
            sigma=KernelWidth(self.sigma),
            prior=self.prior_spec(),
            batch_size=self.batch_size,
            epochs=self.epochs,
            optimizer=OptimizerConfig(
                kind=self.optimizer,
                lr=self.lr,
                momentum=self.momentum,
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.eps,
            ),
            seed=self.seed,
            prior_batch_size=self.prior_batch_size or None,
            checkpoint_every=self.checkpoint_every,
            log_seconds=self.log_seconds,
        )

    def architecture(self, data_dim: int) -> Tuple[List[LayerSpec], List[LayerSpec]]:
        return default_architecture(
            data_dim,
            self.latent_dim,
            self.hidden_sizes,
            hidden_activation=Activation.parse(self.hidden_activation),
            output_activation=Activation.parse(self.output_activation),
        )

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("reg_lambda")
        return d

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / f"run-{self.config_hash()}-seed{self.seed}"

    # ---------- 検証 ----------
    def validate(self) -> "RunConfig":
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed: 64bit 符号なし整数が必要です ({self.seed})")
        if self.dataset not in _DATASETS:
            raise ValidationError(f"dataset: {self.dataset!r} は未対応です (有効: {', '.join(_DATASETS)})")
        if self.dataset in ("idx", "csv"):
            if not self.data_path:
                raise ValidationError(f"data_path: dataset={self.dataset} では必須です")
            if not Path(self.data_path).is_file():
                raise ValidationError(f"data_path: ファイルが見つかりません ({self.data_path})")
        if self.labels_path and not Path(self.labels_path).is_file():
            raise ValidationError(f"labels_path: ファイルが見つかりません ({self.labels_path})")
        if self.n_samples < 1:
            raise ValidationError(f"n_samples: 1 以上が必要です ({self.n_samples})")
        if self.data_noise < 0:
            raise ValidationError(f"data_noise: 0 以上が必要です ({self.data_noise})")
        if self.latent_dim < 1:
            raise ValidationError(f"latent_dim: 1 以上が必要です ({self.latent_dim})")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValidationError(f"hidden_sizes: 各層 1 以上が必要です ({self.hidden_sizes})")
        if Activation.parse(self.output_activation) not in (Activation.IDENTITY, Activation.SIGMOID):
            raise ValidationError(f"output_activation: identity / sigmoid のみ ({self.output_activation})")
        if self.prior_scale < 0:
            raise ValidationError(f"prior_scale: 0（既定値）または正の値 ({self.prior_scale})")
        if not 0 < self.eval_validation_fraction < 1:
            raise ValidationError(f"eval_validation_fraction: (0, 1) の範囲 ({self.eval_validation_fraction})")
        if self.eval_n_generated < 1:
            raise ValidationError(f"eval_n_generated: 1 以上が必要です ({self.eval_n_generated})")
        if any(not s > 0 for s in self.eval_sigma_grid):
            raise ValidationError(f"eval_sigma_grid: 正の値のみ ({self.eval_sigma_grid})")
        if not 0 < self.eval_sigma_min <= self.eval_sigma_max or self.eval_sigma_count < 1:
            raise ValidationError(
                f"eval_sigma_min/eval_sigma_max/eval_sigma_count が不正です "
                f"({self.eval_sigma_min}, {self.eval_sigma_max}, {self.eval_sigma_count})"
            )
        # モジュール側の不変条件（sigma > 0 など）はここでキー名付きで再送出する
        for key, build in (
            ("sigma", lambda: KernelWidth(self.sigma)),
            ("divergence", lambda: DivergenceKind.parse(self.divergence)),
            ("prior_kind", self.prior_spec),
            ("hidden_activation", lambda: self.architecture(1)),
        ):
            try:
                build()
            except ValidationError as e:
                raise ValidationError(f"{key}: {e}") from e
        if not isinstance(logging.getLevelName(self.log_level.upper()), int):
            raise ValidationError(f"log_level: 不正なレベルです ({self.log_level})")
        # lambda / batch_size / epochs / optimizer 系はメッセージ側にキー名が入る
        self.to_train_config()
        return self


def _coerce(name: str, value: Any, default: Any) -> Any:
    # TOML の型を既定値の型に合わせる（int → float は許可）
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, list)
    if not ok:
        raise ValidationError(f"{name}: 型が不正です ({value!r})")
    return value


def run_config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in known or (key in _KEY_ALIASES.values()):
            raise ValidationError(f"{key}: 未知の設定キーです")
        values[name] = _coerce(key, value, getattr(defaults, name))
    if "hidden_sizes" in values:
        values["hidden_sizes"] = [_coerce("hidden_sizes", h, 0) for h in values["hidden_sizes"]]
    if "eval_sigma_grid" in values:
        values["eval_sigma_grid"] = [_coerce("eval_sigma_grid", s, 0.0) for s in values["eval_sigma_grid"]]
    return RunConfig(**values).validate()


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ValidationError(f"設定ファイルが見つかりません: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"設定ファイルの構文エラー: {path} ({e})") from e
    return run_config_from_dict(raw)
