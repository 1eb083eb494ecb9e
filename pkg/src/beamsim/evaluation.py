"""Accuracy metrics and PSR-sweep curves for all attacks.

A sweep evaluates every configured attack on one shared test subset across
a PSR grid, producing per-sample records and aggregated curves (top-1
accuracy, N-k accuracy, mean RSS degradation).  A zero-perturbation control
curve is always included so downstream checks can verify the no-attack
baseline is flat.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import attacks as atk
from .channel import Dataset
from .errors import ReportParseError, ValidationError
from .model import Model

ATTACK_NAMES = (
    "fgm_nontargeted",
    "kworst_true_order",
    "kworst_dnn_order",
    "gaussian",
    "uniform",
)
CONTROL_NAME = "none"

PER_SAMPLE_HEADER = ("sample_id,attack,order_source,psr_db,k,eps_used,"
                     "label_before,label_after,misclassified,target_hit,l1_delta")
CURVES_HEADER = "attack,k,psr_db,top1_acc,nk_acc,mean_degradation_db,n"


@dataclass
class SweepSpec:
    psr_grid_db: list[float] = field(
        default_factory=lambda: [-50.0, -40.0, -30.0, -20.0, -15.0, -10.0, -5.0]
    )
    attacks: list[str] = field(default_factory=lambda: list(ATTACK_NAMES))
    k_values: list[int] = field(default_factory=lambda: [4, 8, 12])
    n_test_samples: int = 2000
    rng_seed: int = 2024

    def validate(self, n_beams: Optional[int] = None) -> None:
        if not self.psr_grid_db:
            raise ValidationError("psr_grid_db: must be nonempty")
        if any(b <= a for a, b in zip(self.psr_grid_db, self.psr_grid_db[1:])):
            raise ValidationError("psr_grid_db: must be sorted strictly ascending")
        for name in self.attacks:
            if name not in ATTACK_NAMES:
                raise ValidationError(f"attacks: unknown attack {name!r}")
        if len(set(self.attacks)) != len(self.attacks):
            raise ValidationError("attacks: duplicate attack names")
        if self.n_test_samples < 1:
            raise ValidationError("n_test_samples: must be >= 1")
        for k in self.k_values:
            if k < 1 or (n_beams is not None and k > n_beams - 1):
                raise ValidationError(f"k_values: k={k} outside [1, N-1]")


@dataclass
class CurvePoint:
    psr_db: float
    top1_acc: float
    nk_acc: float
    mean_degradation_db: float
    n: int


@dataclass
class EvalCurve:
    attack: str
    k: Optional[int]
    points: list[CurvePoint]


@dataclass
class PointRecord:
    """Per-sample outcomes of one (attack, psr[, k]) sweep point."""

    attack: str
    order_source: str
    psr_db: float
    k: Optional[int]
    sample_ids: np.ndarray
    eps_used: np.ndarray
    label_before: np.ndarray
    label_after: np.ndarray
    misclassified: np.ndarray
    target_hit: np.ndarray
    l1_delta: np.ndarray


@dataclass
class SweepResult:
    curves: list[EvalCurve]
    points: list[PointRecord]
    sample_ids: np.ndarray
    clean_accuracy: float


def top1_accuracy(model: Model, x_batch: np.ndarray, labels: np.ndarray) -> float:
    if len(x_batch) == 0:
        raise ValidationError("samples: must be nonempty")
    return float(np.mean(model.predict(x_batch) == labels))


def nk_accuracy(predicted_labels: np.ndarray, rss_full: np.ndarray, k: int) -> float:
    """Fraction of predictions ranking among the N-k strongest true beams.

    Rank is by RSS descending; on exact RSS ties the lower beam index ranks
    higher.  k=0 always yields 1.0.
    """
    rss = np.atleast_2d(np.asarray(rss_full, dtype=np.float64))
    pred = np.atleast_1d(np.asarray(predicted_labels, dtype=np.int64))
    n, n_beams = rss.shape
    if not 0 <= k < n_beams:
        raise ValidationError(f"k: must lie in [0, {n_beams - 1}]")
    pred_rss = rss[np.arange(n), pred]
    stronger = (rss > pred_rss[:, None]).sum(axis=1)
    tied_lower = ((rss == pred_rss[:, None])
                  & (np.arange(n_beams)[None, :] < pred[:, None])).sum(axis=1)
    rank = stronger + tied_lower
    return float(np.mean(rank < n_beams - k))


def rss_degradation(predicted_label, rss_full) -> float:
    """Gap in dB between the best beam and the chosen beam (0 when correct)."""
    rss = np.asarray(rss_full, dtype=np.float64)
    return float(rss.max() - rss[int(predicted_label)])


def _mean_degradation(label_after: np.ndarray, rss_full: np.ndarray) -> float:
    best = rss_full.max(axis=1)
    chosen = rss_full[np.arange(len(label_after)), label_after]
    return float(np.mean(best - chosen))


def _thread_count() -> int:
    raw = os.environ.get("BEAM_SIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"BEAM_SIM_THREADS: not an integer: {raw!r}")


def _psr_stream_key(psr_db: float) -> int:
    return int(round((psr_db + 1000.0) * 1000.0))


def psr_sweep(model: Model, dataset: Dataset, spec: SweepSpec) -> SweepResult:
    """Run every configured attack over the PSR grid on one shared test
    subset and aggregate per-attack accuracy curves."""
    spec.validate(dataset.config.n_beams)
    test_ids = dataset.split_indices("test")
    if len(test_ids) == 0:
        raise ValidationError("dataset: test split is empty")
    n_eval = min(spec.n_test_samples, len(test_ids))
    picker = np.random.default_rng(spec.rng_seed)
    sample_ids = np.sort(picker.choice(test_ids, size=n_eval, replace=False))

    x_eval = dataset.x_m[sample_ids]
    y_eval = dataset.labels[sample_ids].astype(np.int64)
    rss_eval = dataset.rss[sample_ids]
    label_clean = model.predict(x_eval)
    clean_acc = float(np.mean(label_clean == y_eval))
    n_classes = model.n_classes

    order_cache: dict[str, np.ndarray] = {}

    def worst_order(source: str, k: int) -> np.ndarray:
        if source not in order_cache:
            if source == atk.ORDER_TRUE:
                values = rss_eval
            else:
                _, probs = model.forward(x_eval)
                values = probs
            order_cache[source] = np.argsort(values, axis=1, kind="stable")
        return order_cache[source][:, :k]

    def run_point(task) -> PointRecord:
        attack, psr_db, k = task
        p_max = atk.budgets_for(x_eval, psr_db)
        if attack == CONTROL_NAME:
            out = {
                "delta": np.zeros_like(x_eval),
                "eps_used": np.zeros(n_eval),
                "label_before": label_clean,
                "label_after": label_clean,
                "misclassified": label_clean != y_eval,
                "target_hit": np.zeros(n_eval, dtype=bool),
            }
            source = atk.ORDER_NA
        elif attack == "fgm_nontargeted":
            out = atk.fgm_batch(model, x_eval, y_eval, p_max)
            source = atk.ORDER_NA
        elif attack == "kworst_true_order":
            out = atk.kworst_batch(model, x_eval, y_eval,
                                   worst_order(atk.ORDER_TRUE, k), p_max)
            source = atk.ORDER_TRUE
        elif attack == "kworst_dnn_order":
            out = atk.kworst_batch(model, x_eval, y_eval,
                                   worst_order(atk.ORDER_DNN, k), p_max)
            source = atk.ORDER_DNN
        elif attack == "gaussian":
            streams = [
                np.random.default_rng(
                    [spec.rng_seed, _psr_stream_key(psr_db), int(sid)]
                )
                for sid in sample_ids
            ]
            out = atk.gaussian_batch(model, x_eval, y_eval, p_max, streams)
            source = atk.ORDER_NA
        else:
            out = atk.uniform_batch(model, x_eval, y_eval, p_max)
            source = atk.ORDER_NA
        return PointRecord(
            attack=attack,
            order_source=source,
            psr_db=psr_db,
            k=k,
            sample_ids=sample_ids,
            eps_used=out["eps_used"],
            label_before=out["label_before"],
            label_after=out["label_after"],
            misclassified=out["misclassified"],
            target_hit=out["target_hit"],
            l1_delta=np.abs(out["delta"]).sum(axis=1),
        )

    tasks = []
    for attack in [CONTROL_NAME] + list(spec.attacks):
        if attack.startswith("kworst"):
            for k in spec.k_values:
                for psr_db in spec.psr_grid_db:
                    tasks.append((attack, psr_db, k))
        else:
            for psr_db in spec.psr_grid_db:
                tasks.append((attack, psr_db, None))

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(run_point, tasks))
    else:
        points = [run_point(t) for t in tasks]

    k_ref = max(spec.k_values) if spec.k_values else 0
    curves = []
    seen: dict[tuple, EvalCurve] = {}
    for record in points:
        key = (record.attack, record.k)
        if key not in seen:
            seen[key] = EvalCurve(attack=record.attack, k=record.k, points=[])
            curves.append(seen[key])
        k_for_nk = record.k if record.k is not None else k_ref
        seen[key].points.append(CurvePoint(
            psr_db=record.psr_db,
            top1_acc=float(np.mean(record.label_after == y_eval)),
            nk_acc=nk_accuracy(record.label_after, rss_eval, k_for_nk),
            mean_degradation_db=_mean_degradation(record.label_after, rss_eval),
            n=n_eval,
        ))
    return SweepResult(curves=curves, points=points, sample_ids=sample_ids,
                       clean_accuracy=clean_acc)


# ---------------------------------------------------------------------------
# CSV / text emission and parsing

def curves_csv_lines(curves: list[EvalCurve]) -> list[str]:
    lines = [CURVES_HEADER]
    for curve in curves:
        k_str = "" if curve.k is None else str(curve.k)
        for pt in curve.points:
            lines.append(
                f"{curve.attack},{k_str},{pt.psr_db:g},{pt.top1_acc:.6f},"
                f"{pt.nk_acc:.6f},{pt.mean_degradation_db:.6f},{pt.n}"
            )
    return lines


def per_sample_csv_lines(points: list[PointRecord]):
    """Yield per-sample CSV lines (header first)."""
    yield PER_SAMPLE_HEADER
    for rec in points:
        k_str = "" if rec.k is None else str(rec.k)
        for i in range(len(rec.sample_ids)):
            yield (
                f"{int(rec.sample_ids[i])},{rec.attack},{rec.order_source},"
                f"{rec.psr_db:g},{k_str},{float(rec.eps_used[i])!r},"
                f"{int(rec.label_before[i])},{int(rec.label_after[i])},"
                f"{int(rec.misclassified[i])},{int(rec.target_hit[i])},"
                f"{float(rec.l1_delta[i])!r}"
            )


def summary_text_lines(result: SweepResult) -> list[str]:
    lines = [
        f"samples per curve point: {len(result.sample_ids)}",
        f"clean top-1 accuracy: {result.clean_accuracy:.4f}",
        "",
        f"{'attack':>20} {'k':>3} {'psr_db':>7} {'top1':>7} {'nk':>7} "
        f"{'deg_db':>8}",
    ]
    for curve in result.curves:
        for pt in curve.points:
            k_str = "-" if curve.k is None else str(curve.k)
            lines.append(
                f"{curve.attack:>20} {k_str:>3} {pt.psr_db:7g} "
                f"{pt.top1_acc:7.4f} {pt.nk_acc:7.4f} "
                f"{pt.mean_degradation_db:8.3f}"
            )
    return lines


def parse_curves_csv(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line_no == 1:
                if line != CURVES_HEADER:
                    raise ReportParseError(path, line_no, "unexpected header")
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise ReportParseError(path, line_no,
                                       f"expected 7 fields, got {len(parts)}")
            try:
                rows.append({
                    "attack": parts[0],
                    "k": None if parts[1] == "" else int(parts[1]),
                    "psr_db": float(parts[2]),
                    "top1_acc": float(parts[3]),
                    "nk_acc": float(parts[4]),
                    "mean_degradation_db": float(parts[5]),
                    "n": int(parts[6]),
                })
            except ValueError as exc:
                raise ReportParseError(path, line_no, str(exc)) from None
    return rows


def parse_per_sample_csv(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line_no == 1:
                if line != PER_SAMPLE_HEADER:
                    raise ReportParseError(path, line_no, "unexpected header")
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 11:
                raise ReportParseError(path, line_no,
                                       f"expected 11 fields, got {len(parts)}")
            try:
                rows.append({
                    "sample_id": int(parts[0]),
                    "attack": parts[1],
                    "order_source": parts[2],
                    "psr_db": float(parts[3]),
                    "k": None if parts[4] == "" else int(parts[4]),
                    "eps_used": float(parts[5]),
                    "label_before": int(parts[6]),
                    "label_after": int(parts[7]),
                    "misclassified": bool(int(parts[8])),
                    "target_hit": bool(int(parts[9])),
                    "l1_delta": float(parts[10]),
                })
            except ValueError as exc:
                raise ReportParseError(path, line_no, str(exc)) from None
    return rows


# ---------------------------------------------------------------------------
# expected-ordering checks (CI gate)

ORDERING_TOLERANCE = 0.005


def check_orderings(curve_rows: list[dict],
                    tol: float = ORDERING_TOLERANCE) -> list[str]:
    """Return human-readable violations of the expected attack orderings:
    FGM top-1 accuracy at or below both jamming baselines, and real-order
    k-worst N-k accuracy at or below DNN-order, at every grid PSR."""
    violations = []
    by_key: dict[tuple, dict] = {}
    for row in curve_rows:
        by_key[(row["attack"], row["k"], row["psr_db"])] = row

    psrs = sorted({row["psr_db"] for row in curve_rows})
    for psr in psrs:
        fgm = by_key.get(("fgm_nontargeted", None, psr))
        for baseline in ("gaussian", "uniform"):
            base = by_key.get((baseline, None, psr))
            if fgm and base and fgm["top1_acc"] > base["top1_acc"] + tol:
                violations.append(
                    f"fgm_nontargeted top1 {fgm['top1_acc']:.4f} exceeds "
                    f"{baseline} {base['top1_acc']:.4f} at PSR {psr:g} dB"
                )
    ks = sorted({row["k"] for row in curve_rows if row["k"] is not None})
    for k in ks:
        for psr in psrs:
            true_row = by_key.get(("kworst_true_order", k, psr))
            dnn_row = by_key.get(("kworst_dnn_order", k, psr))
            if true_row and dnn_row and \
                    true_row["nk_acc"] > dnn_row["nk_acc"] + tol:
                violations.append(
                    f"kworst_true_order nk {true_row['nk_acc']:.4f} exceeds "
                    f"kworst_dnn_order {dnn_row['nk_acc']:.4f} at k={k}, "
                    f"PSR {psr:g} dB"
                )
    return violations
