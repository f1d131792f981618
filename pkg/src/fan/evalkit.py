"""Recognition metrics and evaluation reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .focus import center_errors


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def ned(pred: str, gt: str) -> float:
    """levenshtein(pred, gt) / len(gt)."""
    if not gt:
        raise ValueError("ground truth must be non-empty")
    return levenshtein(pred, gt) / len(gt)


@dataclass
class SampleRecord:
    prediction: str
    gt: str
    ned: float
    centers: list[float] = field(default_factory=list)  # per-step center errors (pixels)


@dataclass
class EvalReport:
    count: int
    accuracy: float
    total_ned: float
    mean_center_error: float | None
    records: list[SampleRecord]
    mode: str = "free"

    def metrics(self) -> dict[str, float]:
        out = {"samples": self.count, "accuracy": self.accuracy, "total_ned": self.total_ned}
        if self.mean_center_error is not None:
            out["mean_center_error"] = self.mean_center_error
        return out

    def metric_lines(self) -> str:
        lines = [f"mode={self.mode}"]
        for k, v in self.metrics().items():
            lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = [("metric", "value")] + [(k, f"{v:.4f}" if isinstance(v, float) else str(v))
                                        for k, v in self.metrics().items()]
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b}" for a, b in rows) + "\n"


def build_report(preds: list[str], gts: list[str], center_lists=None, mode: str = "free") -> EvalReport:
    records = []
    exact = 0
    errs: list[float] = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        p_l, g_l = p.lower(), g.lower()
        exact += p_l == g_l
        c = center_lists[i] if center_lists is not None and center_lists[i] is not None else []
        errs.extend(c)
        records.append(SampleRecord(p, g, ned(p_l, g_l), list(c)))
    n = len(records)
    mean_c = None
    if center_lists is not None and any(c is not None for c in center_lists):
        # annotated samples present: always report, nan when no decoded step aligns with a box
        mean_c = float(np.mean(errs)) if errs else float("nan")
    return EvalReport(n, exact / n if n else 0.0, float(sum(r.ned for r in records)), mean_c, records, mode)


def evaluate(model, dataset, lexicon: list[str] | None = None, batch_size: int = 64) -> EvalReport:
    """Decode every sample (greedy, or lexicon-constrained when ``lexicon`` is given).

    Attention-center error is measured on annotated samples from the greedy
    path, over the steps that have both a prediction and a box.
    """
    samples = list(dataset)
    if not samples:
        raise ValueError("dataset is empty")
    preds: list[str] = []
    centers: list = []
    cent = model.encoder.centers
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        imgs = np.stack([s.image for s in chunk])[:, None]
        texts, alphas = model.predict(imgs)
        for s, t, a in zip(chunk, texts, alphas):
            centers.append(center_errors(a, cent, s.boxes) if s.annotated and s.boxes else None)
        if lexicon is None:
            preds.extend(texts)
        else:
            preds.extend(model.lexicon_predict(img, lexicon) for img in imgs)
    return build_report(preds, [s.text for s in samples], centers, "lexicon" if lexicon else "free")
