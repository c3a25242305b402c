# -*- coding: utf-8 -*-
# ======================================================================
# pdf_generator.py ― 学習ランの PDF レポート（reportlab）
# ======================================================================
from __future__ import annotations

import io
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.pdfbase import pdfmetrics
from reportlab.pdfbase.ttfonts import TTFont
from reportlab.platypus import (
    Flowable,
    KeepTogether,
    PageBreak,
    Paragraph,
    SimpleDocTemplate,
    Spacer,
    Table,
    TableStyle,
)

# 日本語フォントがあれば使う（無ければ Helvetica）
_FONT = "Helvetica"
_FONT_FILE = Path(__file__).parent / "fonts" / "ipag.ttf"
if _FONT_FILE.exists():
    pdfmetrics.registerFont(TTFont("IPAGothic", str(_FONT_FILE)))
    _FONT = "IPAGothic"

_NAVY = colors.HexColor("#0D2E5A")
_MAX_TABLE_ROWS = 40
_EPOCH_COLUMNS = ("epoch", "recon_loss", "divergence", "cost", "seconds")

_base = getSampleStyleSheet()
TITLE = ParagraphStyle("RunTitle", parent=_base["Title"], fontName=_FONT, fontSize=20, leading=24, alignment=TA_CENTER)
H1 = ParagraphStyle("RunHeading", parent=_base["Heading2"], fontName=_FONT, textColor=_NAVY, spaceBefore=10, spaceAfter=8)
BODY = ParagraphStyle("RunBody", parent=_base["Normal"], fontName=_FONT, fontSize=10, leading=15)


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


class HighlightBox(Flowable):
    """結果の要点を 1〜数行で示す色付きボックス"""

    def __init__(self, lines: Sequence[str], width: float = 440, color: str = "#FFE082"):
        Flowable.__init__(self)
        self.lines = list(lines)
        self.width = width
        self.height = 18 * len(self.lines) + 16
        self.color = color

    def draw(self) -> None:
        c = self.canv
        c.saveState()
        c.setFillColor(colors.HexColor(self.color))
        c.roundRect(0, 0, self.width, self.height, 8, fill=1, stroke=0)
        c.setFillColor(_NAVY)
        c.setFont(_FONT, 11)
        y = self.height - 22
        for line in self.lines:
            c.drawString(14, y, line)
            y -= 18
        c.restoreState()


def _thin_rows(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    # 等間隔に間引き、最終エポックは必ず残す
    if len(rows) <= _MAX_TABLE_ROWS:
        return rows
    step = -(-len(rows) // _MAX_TABLE_ROWS)
    picked = rows[::step]
    if picked[-1] is not rows[-1]:
        picked.append(rows[-1])
    return picked


def _table(header: Sequence[str], body: Sequence[Sequence[Any]], widths: Sequence[float] | None = None) -> Flowable:
    if not body:
        return Paragraph("※ データなし", BODY)
    tbl = Table([list(header)] + [[_fmt(v) for v in row] for row in body], colWidths=widths, repeatRows=1, hAlign="LEFT")
    tbl.setStyle(
        TableStyle(
            [
                ("FONTNAME", (0, 0), (-1, -1), _FONT),
                ("FONTSIZE", (0, 0), (-1, -1), 9),
                ("BACKGROUND", (0, 0), (-1, 0), _NAVY),
                ("TEXTCOLOR", (0, 0), (-1, 0), colors.white),
                ("ROWBACKGROUNDS", (0, 1), (-1, -1), [colors.HexColor("#F5F7FA"), colors.white]),
                ("GRID", (0, 0), (-1, -1), 0.25, colors.HexColor("#AAAAAA")),
                ("ALIGN", (1, 1), (-1, -1), "RIGHT"),
            ]
        )
    )
    return tbl


def _section(title: str, *flowables: Flowable) -> KeepTogether:
    return KeepTogether([Paragraph(title, H1), *flowables, Spacer(1, 14)])


def _page_decor(canvas, doc) -> None:
    w, h = A4
    canvas.saveState()
    canvas.setStrokeColor(_NAVY)
    canvas.setLineWidth(0.6)
    canvas.line(50, h - 55, w - 50, h - 55)
    canvas.setFont(_FONT, 8)
    canvas.drawString(50, h - 48, doc.title)
    canvas.drawRightString(w - 50, 30, f"{doc.page}")
    canvas.restoreState()


def create_pdf(
    filename: io.BytesIO | str | Path,
    *,
    metrics: List[Dict[str, Any]],
    summary: Dict[str, Any] | None = None,
    config: Dict[str, Any] | None = None,
    likelihood: Dict[str, Any] | None = None,
    sigma_curve: Sequence[Tuple[float, float]] | None = None,
    title: str = "ITL-AE Run Report",
) -> None:
    doc = SimpleDocTemplate(
        str(filename) if isinstance(filename, Path) else filename,
        pagesize=A4,
        leftMargin=50,
        rightMargin=50,
        topMargin=70,
        bottomMargin=60,
        title=title,
    )
    story: List[Flowable] = [
        Paragraph(title, TITLE),
        Spacer(1, 8),
        Paragraph(f"作成日: {datetime.today():%Y-%m-%d}", BODY),
        Spacer(1, 12),
    ]

    if summary and "error" not in summary:
        lines = [
            f"epochs: {summary['epochs']}",
            f"divergence: x{summary['divergence_ratio']}   recon: x{summary['recon_ratio']}  (final / initial)",
        ]
        if likelihood:
            lines.append(
                f"Parzen LL: {_fmt(likelihood.get('parzen_mean_log_likelihood'))} nats  (sigma={_fmt(likelihood.get('sigma'))})"
            )
        story.append(HighlightBox(lines))
    story.append(PageBreak())

    if summary:
        story.append(_section("学習サマリ", _table(["item", "value"], list(summary.items()), [200, 200])))

    rows = [[r.get(c, "") for c in _EPOCH_COLUMNS] for r in _thin_rows(metrics)]
    story.append(Paragraph("エポック指標", H1))
    story.append(_table(_EPOCH_COLUMNS, rows))
    story.append(Spacer(1, 14))

    if likelihood:
        story.append(_section("Parzen 推定対数尤度", _table(["item", "value"], list(likelihood.items()), [200, 200])))
    if sigma_curve:
        story.append(_section("カーネルサイズ選択曲線", _table(["sigma", "mean_ll"], [list(r) for r in sigma_curve], [120, 160])))
    if config:
        story.append(_section("実行設定", _table(["key", "value"], sorted(config.items()), [170, 270])))

    doc.build(story, onFirstPage=_page_decor, onLaterPages=_page_decor)
