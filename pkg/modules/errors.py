# -*- coding: utf-8 -*-
# errors.py ― 例外クラス（CLI の終了コードと対応）
from __future__ import annotations


class ITLError(Exception):
    """ライブラリ共通の基底例外"""


class ValidationError(ITLError, ValueError):
    """入力・設定・ファイル形式の検証エラー（exit 1）"""


class IdxFormatError(ValidationError):
    pass


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxElementTypeError(IdxFormatError):
    pass


class NumericalAbort(ITLError, RuntimeError):
    """学習中の非有限値（NaN/Inf）検出（exit 2）"""
