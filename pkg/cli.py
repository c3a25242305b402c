# -*- coding: utf-8 -*-
# ======================================================================
# cli.py ― コマンドライン入口（train / encode / generate / divergence /
#          eval-ll / sample-prior / report）
# ======================================================================
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import pandas as pd

from config import RunConfig, init_logging, load_run_config
from modules.data_io import (
    DatasetHandle,
    append_metrics_jsonl,
    load_samples,
    make_synthetic,
    read_csv_samples,
    read_metrics_jsonl,
    write_csv_samples,
    write_metrics_workbook,
)
from modules.errors import ITLError, ValidationError
from modules.evaluation import (
    default_sigma_grid,
    evaluate_parzen_protocol,
    generate,
    interpolate_latent,
    write_sigma_curve,
)
from modules.itl_estimators import DivergenceKind, KernelWidth, divergence
from modules.network import forward, load_checkpoint
from modules.numerics import STREAM_DATA, STREAM_EVAL, Rng
from modules.priors import PriorKind, PriorSpec, sample_prior
from modules.trainer import EpochMetrics, train
from modules.utils import calc_training_summary, parse_walk

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} が見つかりません: {p}")
    return p


def _json_safe(obj: Any) -> Any:
    # inf / nan は JSON に無いので null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _dumps(obj: Dict[str, Any]) -> str:
    return json.dumps(_json_safe(obj), indent=2, ensure_ascii=False, allow_nan=False)


def _print_json(obj: Dict[str, Any]) -> None:
    print(_dumps(obj))


def _write_json(path: Path, obj: Dict[str, Any]) -> None:
    path.write_text(_dumps(obj) + "\n", encoding="utf-8")


def load_dataset(cfg: RunConfig) -> DatasetHandle:
    if cfg.dataset in ("idx", "csv"):
        return load_samples(cfg.data_path, cfg.labels_path or None)
    return make_synthetic(cfg.dataset, cfg.n_samples, cfg.data_noise, Rng(cfg.seed, STREAM_DATA))


# ======================================================================
# train
# ======================================================================
def cmd_train(config_path: str, log_level: str | None = None) -> int:
    cfg = load_run_config(config_path)
    init_logging(log_level or cfg.log_level)
    data = load_dataset(cfg)
    train_cfg = cfg.to_train_config()
    enc_specs, dec_specs = cfg.architecture(data.dim)

    # 検証が終わってから出力ディレクトリを作る
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"run directory: {run_dir}")
    _write_json(run_dir / "config.json", cfg.to_dict())

    metrics_path = run_dir / "metrics.jsonl"
    metrics_path.write_text("", encoding="utf-8")

    def on_epoch(m: EpochMetrics) -> None:
        append_metrics_jsonl(metrics_path, m.to_dict())

    meta = {"config": cfg.to_dict(), "prior": train_cfg.prior.to_dict(), "train": train_cfg.to_dict()}
    enc, dec, history = train(
        data,
        train_cfg,
        enc_specs,
        dec_specs,
        checkpoint_path=run_dir / "checkpoint.json",
        checkpoint_meta=meta,
        on_epoch=on_epoch,
    )

    codes, _ = forward(enc, data.data)
    write_csv_samples(codes, run_dir / "codes.csv", data.labels)
    summary = calc_training_summary([m.to_dict() for m in history])
    _write_json(run_dir / "summary.json", summary)
    _print_json({"run_dir": str(run_dir), **summary})
    return EXIT_OK


# ======================================================================
# generate / encode
# ======================================================================
def _prior_with_overrides(base: Dict[str, Any], args: argparse.Namespace, dim: int) -> PriorSpec:
    d = dict(base or {})
    d["dim"] = dim if args.prior_dim is None else args.prior_dim
    if args.prior_kind is not None:
        d["kind"] = PriorKind.parse(args.prior_kind)
        d.pop("scale", None)
    for key in ("location", "scale", "turns", "noise_std"):
        value = getattr(args, f"prior_{key}")
        if value is not None:
            d[key] = value
    return PriorSpec.from_dict(d)


def cmd_generate(args: argparse.Namespace) -> int:
    enc, dec, meta = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    if args.walk:
        a, b, k = parse_walk(*args.walk)
        z = interpolate_latent(a, b, k)
        if z.shape[1] != dec.input_dim:
            raise ValidationError(f"walk の次元 {z.shape[1]} がデコーダ入力 {dec.input_dim} と一致しません")
        out, _ = forward(dec, z)
    else:
        prior = _prior_with_overrides(meta.get("prior", {}), args, dec.input_dim)
        out = generate(dec, prior, args.n, Rng(args.seed, STREAM_EVAL))
    write_csv_samples(out, args.out)
    logger.info(f"{out.shape[0]} 件を書き出しました: {args.out}")
    return EXIT_OK


def cmd_encode(args: argparse.Namespace) -> int:
    enc, _, _ = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    labels = _require_file(args.labels, "labels") if args.labels else None
    data = load_samples(_require_file(args.data, "data"), labels)
    if data.dim != enc.input_dim:
        raise ValidationError(f"データ次元 {data.dim} がエンコーダ入力 {enc.input_dim} と一致しません")
    codes, _ = forward(enc, data.data)
    write_csv_samples(codes, args.out, data.labels)
    return EXIT_OK


# ======================================================================
# divergence
# ======================================================================
def cmd_divergence(args: argparse.Namespace) -> int:
    x = read_csv_samples(_require_file(args.x, "x"))
    y = read_csv_samples(_require_file(args.y, "y"))
    if x.shape[1] != y.shape[1]:
        raise ValidationError(f"次元が一致しません: x は {x.shape[1]} 次元, y は {y.shape[1]} 次元")
    report = divergence(DivergenceKind.parse(args.kind), x, y, KernelWidth(args.sigma))
    if not math.isfinite(report.value):
        logger.warning(f"{report.kind.value}: 交差情報ポテンシャルがアンダーフローしました (value={report.value})。null を出力します")
    _print_json(report.to_dict())
    return EXIT_OK


# ======================================================================
# eval-ll
# ======================================================================
def cmd_eval_ll(args: argparse.Namespace) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    cfg = load_run_config(args.config)
    init_logging(args.log_level or cfg.log_level)
    _, dec, _ = load_checkpoint(ckpt)
    test = load_samples(_require_file(args.test, "test data")).data
    if test.shape[1] != dec.output_dim:
        raise ValidationError(f"テストデータ次元 {test.shape[1]} がデコーダ出力 {dec.output_dim} と一致しません")
    prior = cfg.prior_spec()
    if prior.dim != dec.input_dim:
        raise ValidationError(f"prior dim={prior.dim} (latent_dim) がデコーダ入力 {dec.input_dim} と一致しません")

    rng = Rng(cfg.seed, STREAM_EVAL)
    if args.validation:
        validation = load_samples(_require_file(args.validation, "validation data")).data
    else:
        # 固定シードの置換で先頭 eval_validation_fraction を σ 選択用に取り分ける
        perm = rng.permutation(test.shape[0])
        n_val = int(round(cfg.eval_validation_fraction * test.shape[0]))
        if n_val < 1 or n_val >= test.shape[0]:
            raise ValidationError(f"テストデータ {test.shape[0]} 件では検証用の分割ができません")
        validation, test = test[perm[:n_val]], test[perm[n_val:]]

    grid = cfg.eval_sigma_grid or default_sigma_grid(cfg.eval_sigma_min, cfg.eval_sigma_max, cfg.eval_sigma_count)
    report, curve = evaluate_parzen_protocol(dec, prior, test, validation, grid, cfg.eval_n_generated, rng)

    out_dir = Path(args.out_dir) if args.out_dir else ckpt.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "likelihood.json", report.to_dict())
    write_sigma_curve(out_dir / "sigma_curve.csv", curve)
    _print_json(report.to_dict())
    return EXIT_OK


# ======================================================================
# sample-prior
# ======================================================================
def cmd_sample_prior(args: argparse.Namespace) -> int:
    spec = PriorSpec(
        kind=PriorKind.parse(args.kind),
        dim=args.dim,
        location=args.location,
        scale=args.scale,
        turns=args.turns,
        noise_std=args.noise_std,
    )
    write_csv_samples(sample_prior(spec, args.n, Rng(args.seed, STREAM_EVAL)), args.out)
    return EXIT_OK


# ======================================================================
# report（PDF + Excel）
# ======================================================================
def cmd_report(args: argparse.Namespace) -> int:
    from pdf_generator import create_pdf

    run_dir = Path(args.run_dir)
    metrics = read_metrics_jsonl(_require_file(run_dir / "metrics.jsonl", "metrics.jsonl"))
    summary = calc_training_summary(metrics)

    def optional_json(name: str) -> Optional[Dict[str, Any]]:
        p = run_dir / name
        return json.loads(p.read_text(encoding="utf-8")) if p.is_file() else None

    curve_path = run_dir / "sigma_curve.csv"
    curve_df = pd.read_csv(curve_path) if curve_path.is_file() else None
    curve = list(curve_df.itertuples(index=False, name=None)) if curve_df is not None else None

    create_pdf(
        run_dir / "report.pdf",
        metrics=metrics,
        summary=summary,
        config=optional_json("config.json"),
        likelihood=optional_json("likelihood.json"),
        sigma_curve=curve,
    )
    write_metrics_workbook(run_dir / "report.xlsx", metrics, curve_df, summary)
    logger.info(f"レポートを書き出しました: {run_dir / 'report.pdf'}")
    return EXIT_OK


# ======================================================================
# 引数定義
# ======================================================================
def _add_prior_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prior-location", type=float, default=None)
    p.add_argument("--prior-scale", type=float, default=None)
    p.add_argument("--prior-turns", type=float, default=None)
    p.add_argument("--prior-noise-std", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itl-ae",
        description="ITL divergence estimators and ITL-regularized autoencoders",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG / INFO / WARNING (default: config or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an ITL autoencoder from a run config")
    p.add_argument("config", help="flat TOML run config")
    p.set_defaults(func=lambda a: cmd_train(a.config, a.log_level))

    p = sub.add_parser("generate", help="decode prior draws (or a latent linear walk)")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior-kind", default=None, choices=[k.value for k in PriorKind])
    p.add_argument("--prior-dim", type=int, default=None)
    _add_prior_flags(p)
    p.add_argument("--walk", nargs=3, metavar=("A", "B", "K"), default=None,
                   help="comma-separated latent endpoints A and B, K points")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("encode", help="export latent codes of a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data", help="CSV (c0,c1,...) or IDX image file")
    p.add_argument("--labels", default=None, help="IDX label file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("divergence", help="ITL divergence between two sample files")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--kind", default="euclidean", choices=[k.value for k in DivergenceKind])
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("eval-ll", help="Parzen-estimate log-likelihood protocol")
    p.add_argument("checkpoint")
    p.add_argument("test", help="test data (CSV or IDX)")
    p.add_argument("--config", required=True)
    p.add_argument("--validation", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_eval_ll)

    p = sub.add_parser("sample-prior", help="write prior draws as CSV")
    p.add_argument("--kind", default="gaussian", choices=[k.value for k in PriorKind])
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--location", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--turns", type=float, default=1.5)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.set_defaults(func=cmd_sample_prior)

    p = sub.add_parser("report", help="PDF + Excel report of a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        init_logging(args.log_level or "INFO")
        return args.func(args)
    except ValidationError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ITLError, OSError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
