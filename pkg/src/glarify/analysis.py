"""Gaze-noise ratio analysis, eval-set sampling, and the LLM judge scaffold.

The ratio curve bins fixations by query-time fraction t in [0, 1]; bin k
covers [k/n, (k+1)/n) with the last bin closed, and the per-bin ratio is
irrelevant / total (undefined where a bin is empty). Relevance labels are
external input; nothing here invents them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .canonical import atomic_write_text, canonical_json, quantize
from .data_model import DatasetSplit
from .errors import DataError, StructuredOutputError
from .llm_client import ChatClient, ChatRequest, extract_json_block
from .prompts import load_template, render_template

VERDICT_ALIGNED = "aligned"
VERDICT_NOT_ALIGNED = "not_aligned"
VERDICT_ERROR = "judge_error"


@dataclass(frozen=True)
class LabeledFixation:
    """One fixation at query-time fraction t with an external relevance label."""

    t: float
    relevant: bool

    def __post_init__(self):
        if not (0.0 <= self.t <= 1.0):
            raise DataError(f"fixation time ratio outside [0, 1]: {self.t}")


@dataclass(frozen=True)
class RatioBin:
    lo: float
    hi: float
    n_irr: int
    n_total: int

    @property
    def ratio(self) -> float | None:
        return None if self.n_total == 0 else self.n_irr / self.n_total


@dataclass(frozen=True)
class RatioCurve:
    n_bins: int
    bins: tuple[RatioBin, ...]

    @property
    def total_fixations(self) -> int:
        return sum(b.n_total for b in self.bins)


def bin_index(t: float, n_bins: int) -> int:
    """Bin holding t under [k/n, (k+1)/n) with a closed last bin.

    The float product is nudged onto the definitional boundaries so the
    result always agrees with direct comparisons against k/n.
    """
    k = min(int(t * n_bins), n_bins - 1)
    while k + 1 <= n_bins - 1 and t >= (k + 1) / n_bins:
        k += 1
    while k > 0 and t < k / n_bins:
        k -= 1
    return k


def irrelevant_ratio(fixations: Sequence[LabeledFixation], n_bins: int) -> RatioCurve:
    """Per-bin irrelevant-over-total fixation counts across query time."""
    if n_bins < 1:
        raise DataError("n_bins must be >= 1")
    totals = [0] * n_bins
    irr = [0] * n_bins
    for fx in fixations:
        k = bin_index(fx.t, n_bins)
        totals[k] += 1
        if not fx.relevant:
            irr[k] += 1
    bins = tuple(
        RatioBin(lo=k / n_bins, hi=(k + 1) / n_bins, n_irr=irr[k], n_total=totals[k])
        for k in range(n_bins)
    )
    return RatioCurve(n_bins=n_bins, bins=bins)


def read_fixations(source: Iterable[str] | str | Path) -> list[LabeledFixation]:
    """Load line-delimited ``{"t": float, "relevant": bool}`` records."""
    if isinstance(source, (str, Path)):
        source = Path(source).read_text(encoding="utf-8").splitlines()
    out = []
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(LabeledFixation(t=float(rec["t"]), relevant=bool(rec["relevant"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, DataError) as exc:
            raise DataError(f"fixation line {line_no}: {exc}") from exc
    return out


def write_ratio_curve(curve: RatioCurve, path: str | Path) -> None:
    """Machine-readable bin records plus plot-ready (bin center, ratio) columns."""
    lines = []
    for b in curve.bins:
        lines.append(
            canonical_json(
                {
                    "lo": quantize(b.lo),
                    "hi": quantize(b.hi),
                    "n_irr": b.n_irr,
                    "n_total": b.n_total,
                    "ratio": None if b.ratio is None else quantize(b.ratio),
                    "bin_center": quantize((b.lo + b.hi) / 2.0),
                }
            )
        )
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def curve_table(curve: RatioCurve) -> str:
    rows = ["bin_center\tratio"]
    for b in curve.bins:
        ratio = "nan" if b.ratio is None else f"{b.ratio:.4f}"
        rows.append(f"{(b.lo + b.hi) / 2.0:.4f}\t{ratio}")
    return "\n".join(rows)


def sample_eval_set(split: DatasetSplit, n: int, seed: int) -> DatasetSplit:
    """Seeded uniform subset without replacement, flagged to present the
    indirect question; output is sorted by the stable sample key."""
    if n > len(split.samples):
        raise DataError(f"cannot sample {n} of {len(split.samples)} samples")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(split.samples), size=n, replace=False)
    picked = [replace(split.samples[int(i)], eval_use_indirect=True) for i in chosen]
    picked.sort(key=lambda s: s.key())
    return DatasetSplit(split.split_name, tuple(picked))


@dataclass(frozen=True)
class JudgeItem:
    question: str
    reference_answer: str
    response: str


@dataclass(frozen=True)
class JudgeReport:
    verdicts: tuple[str, ...]
    aligned: int
    not_aligned: int
    errors: int

    @property
    def judged(self) -> int:
        return self.aligned + self.not_aligned

    @property
    def aggregate(self) -> float | None:
        """Fraction of judged items deemed factually aligned."""
        return None if self.judged == 0 else self.aligned / self.judged


def judge_request(item: JudgeItem, model_name: str = "gpt-4o") -> ChatRequest:
    return ChatRequest(
        system_prompt=load_template("judge_system"),
        user_content=render_template(
            "judge_user",
            question=item.question,
            reference_answer=item.reference_answer,
            response=item.response,
        ),
        temperature=0.0,
        model_name=model_name,
    )


def judge_item(item: JudgeItem, client: ChatClient, model_name: str = "gpt-4o") -> str:
    """One verdict: aligned, not_aligned, or judge_error on strict-parse failure.

    Transport failures are not verdicts and propagate to the caller.
    """
    response = client.complete(judge_request(item, model_name))
    try:
        parsed = extract_json_block(response.text)
    except StructuredOutputError:
        return VERDICT_ERROR
    if not isinstance(parsed, dict):
        return VERDICT_ERROR
    verdict = parsed.get("verdict")
    if verdict not in (VERDICT_ALIGNED, VERDICT_NOT_ALIGNED):
        return VERDICT_ERROR
    return verdict


def judge_accuracy(items: Sequence[JudgeItem], client: ChatClient, model_name: str = "gpt-4o") -> JudgeReport:
    """Judge every item; parse failures are excluded from the denominator."""
    verdicts = tuple(judge_item(item, client, model_name) for item in items)
    return JudgeReport(
        verdicts=verdicts,
        aligned=sum(v == VERDICT_ALIGNED for v in verdicts),
        not_aligned=sum(v == VERDICT_NOT_ALIGNED for v in verdicts),
        errors=sum(v == VERDICT_ERROR for v in verdicts),
    )


def read_judge_items(source: Iterable[str] | str | Path) -> list[JudgeItem]:
    """Load line-delimited ``{"question", "reference_answer", "response"}`` records."""
    if isinstance(source, (str, Path)):
        source = Path(source).read_text(encoding="utf-8").splitlines()
    items = []
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            items.append(
                JudgeItem(
                    question=str(rec["question"]),
                    reference_answer=str(rec["reference_answer"]),
                    response=str(rec["response"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"judge item line {line_no}: {exc}") from exc
    return items
