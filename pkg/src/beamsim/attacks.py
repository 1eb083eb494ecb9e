"""Adversarial perturbations against the frozen classifier: non-targeted
FGM, the k-worst beam attack, and Gaussian/uniform jamming baselines.

All perturbations act on the raw dBm input vector and respect an L1 power
budget derived from the perturbation-to-signal ratio (PSR).  Single-sample
operations are the public contract; the *_batch functions run the identical
search in lock step across many samples for fast sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateGradientError, ValidationError
from .model import Model

# eps_acc = p_max / 1024 gives exactly 10 bisection iterations per search;
# the resolution is far below any accuracy-visible effect.
DEFAULT_EPS_ACC_FRACTION = 1.0 / 1024.0


def _n_bisect_steps(eps_acc_fraction: float) -> int:
    """Iterations needed to shrink [0, p_max] below eps_acc by halving."""
    return max(1, math.ceil(math.log2(1.0 / eps_acc_fraction)))

ORDER_TRUE = "true_rss"
ORDER_DNN = "dnn_output"
ORDER_NA = "not_applicable"


@dataclass
class AttackBudget:
    """PSR-derived L1 perturbation budget for one input vector."""

    psr_db: float
    p_max: float
    eps_acc: float
    derived_from: str = ""

    def validate(self) -> None:
        if not self.p_max > 0:
            raise ValidationError("p_max: must be > 0")
        if not 0 < self.eps_acc < self.p_max:
            raise ValidationError("eps_acc: must lie in (0, p_max)")


@dataclass
class PerturbationOutcome:
    """The perturbation applied to one sample and what it achieved."""

    delta: np.ndarray
    eps_used: float
    label_before: int
    label_after: int
    misclassified: bool
    target_index: Optional[int] = None
    target_hit: bool = False
    order_source: str = ORDER_NA


def psr_to_budget(psr_db: float, x_m: np.ndarray,
                  eps_acc_fraction: float = DEFAULT_EPS_ACC_FRACTION) -> AttackBudget:
    """Budget for one input: p_max = 10^(psr/10) * ||x_m||_1.

    L1 masses match the L1-normalized attack direction and the plain-sum
    power constraint, so eps in the bisection *is* the L1 norm spent.
    """
    x = np.asarray(x_m, dtype=np.float64)
    l1 = float(np.abs(x).sum())
    if l1 == 0.0:
        raise ValidationError("x_m: L1 mass is zero, budget undefined")
    if not 0 < eps_acc_fraction < 1:
        raise ValidationError("eps_acc_fraction: must lie in (0, 1)")
    p_max = 10.0 ** (psr_db / 10.0) * l1
    return AttackBudget(
        psr_db=psr_db,
        p_max=p_max,
        eps_acc=eps_acc_fraction * p_max,
        derived_from=f"l1={l1!r}",
    )


def _onehot(label: int, n_classes: int) -> np.ndarray:
    y = np.zeros(n_classes)
    y[label] = 1.0
    return y


def fgm_direction(model: Model, x_m: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Loss gradient at the input, L1-normalized."""
    grad = model.input_gradient(x_m, y)
    l1 = float(np.abs(grad).sum())
    if l1 == 0.0:
        raise DegenerateGradientError("input gradient is the zero vector")
    return grad / l1


def fgm_nontargeted(model: Model, x_m: np.ndarray, y_true: int,
                    budget: AttackBudget) -> PerturbationOutcome:
    """Non-targeted FGM: ascend the true-label loss along the L1-normalized
    gradient, binary-searching the smallest label-flipping step.

    If no step within the budget flips the label, the returned eps stays at
    p_max (the upper bound retains its initialization).  Inputs that are
    already misclassified return a zero perturbation immediately.
    """
    budget.validate()
    x = np.asarray(x_m, dtype=np.float64)
    label_before = model.predict(x)
    if label_before != y_true:
        return PerturbationOutcome(
            delta=np.zeros_like(x), eps_used=0.0, label_before=label_before,
            label_after=label_before, misclassified=True,
        )
    try:
        direction = fgm_direction(model, x, _onehot(y_true, model.n_classes))
    except DegenerateGradientError:
        return PerturbationOutcome(
            delta=np.zeros_like(x), eps_used=0.0, label_before=label_before,
            label_after=label_before, misclassified=False,
        )
    eps_min, eps_max = 0.0, budget.p_max
    # Fixed iteration count: with exact arithmetic the loop condition
    # eps_max - eps_min > eps_acc runs exactly ceil(log2(p_max/eps_acc))
    # times; counting explicitly keeps that exact under floating point and
    # identical to the lock-step batch search.
    for _ in range(_n_bisect_steps(budget.eps_acc / budget.p_max)):
        eps_avg = 0.5 * (eps_min + eps_max)
        if model.predict(x + eps_avg * direction) == y_true:
            eps_min = eps_avg
        else:
            eps_max = eps_avg
    delta = eps_max * direction
    label_after = model.predict(x + delta)
    return PerturbationOutcome(
        delta=delta, eps_used=eps_max, label_before=label_before,
        label_after=label_after, misclassified=label_after != y_true,
    )


def beam_order_worst_first(values: np.ndarray, source: str, k: int) -> np.ndarray:
    """Indices of the k smallest entries, worst first (ties: lower index).

    ``values`` is the true RSS vector for source='true_rss' or the
    classifier's inference-mode probabilities for source='dnn_output'.
    """
    if source not in (ORDER_TRUE, ORDER_DNN):
        raise ValidationError(f"source: unknown order source {source!r}")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError("values: must be a vector")
    if not 1 <= k <= len(v):
        raise ValidationError(f"k: must lie in [1, {len(v)}]")
    return np.argsort(v, kind="stable")[:k]


def k_worst_attack(model: Model, x_m: np.ndarray, y_true: int,
                   worst_indices, budget: AttackBudget,
                   order_source: str = ORDER_NA) -> PerturbationOutcome:
    """Targeted descent toward each candidate target, worst first.

    For each target the targeted loss is *decreased* (candidates
    x - eps*direction); the bisection brackets the flip away from y_true and
    the candidate at the final midpoint is kept if it lands exactly on the
    target.  Targets with a degenerate gradient are skipped.  If no target
    is hit, the last attempt is returned with target_hit=False.
    """
    budget.validate()
    x = np.asarray(x_m, dtype=np.float64)
    targets = [int(t) for t in worst_indices]
    if not targets:
        raise ValidationError("worst_indices: must be nonempty")
    for t in targets:
        if not 0 <= t < model.n_classes:
            raise ValidationError(f"worst_indices: beam {t} out of range")
        if t == y_true:
            raise ValidationError(
                "worst_indices: the true label cannot be an attack target"
            )

    label_before = model.predict(x)
    if label_before != y_true:
        return PerturbationOutcome(
            delta=np.zeros_like(x), eps_used=0.0, label_before=label_before,
            label_after=label_before, misclassified=True,
            target_index=label_before if label_before in targets else None,
            target_hit=label_before in targets, order_source=order_source,
        )

    last: Optional[PerturbationOutcome] = None
    for target in targets:
        try:
            direction = fgm_direction(model, x, _onehot(target, model.n_classes))
        except DegenerateGradientError:
            continue
        eps_min, eps_max = 0.0, budget.p_max
        for _ in range(_n_bisect_steps(budget.eps_acc / budget.p_max)):
            eps_avg = 0.5 * (eps_min + eps_max)
            if model.predict(x - eps_avg * direction) == y_true:
                eps_min = eps_avg
            else:
                eps_max = eps_avg
        eps_avg = 0.5 * (eps_min + eps_max)
        delta = -eps_avg * direction
        label_after = model.predict(x + delta)
        last = PerturbationOutcome(
            delta=delta, eps_used=eps_avg, label_before=label_before,
            label_after=label_after, misclassified=label_after != y_true,
            target_index=target, target_hit=label_after == target,
            order_source=order_source,
        )
        if last.target_hit:
            return last
    if last is None:
        # every target had a degenerate gradient
        return PerturbationOutcome(
            delta=np.zeros_like(x), eps_used=0.0, label_before=label_before,
            label_after=label_before, misclassified=False,
            target_index=None, target_hit=False, order_source=order_source,
        )
    return last


def gaussian_jam(model: Model, x_m: np.ndarray, y_true: int,
                 budget: AttackBudget, noise_source) -> PerturbationOutcome:
    """Gaussian noise rescaled to exhaust the L1 budget exactly."""
    budget.validate()
    x = np.asarray(x_m, dtype=np.float64)
    raw = noise_source.standard_normal(x.shape[0])
    l1 = float(np.abs(raw).sum())
    if l1 == 0.0:
        raise ValidationError("noise draw has zero L1 mass")
    delta = raw * (budget.p_max / l1)
    label_before = model.predict(x)
    label_after = model.predict(x + delta)
    return PerturbationOutcome(
        delta=delta, eps_used=budget.p_max, label_before=label_before,
        label_after=label_after, misclassified=label_after != y_true,
    )


def uniform_jam(model: Model, x_m: np.ndarray, y_true: int,
                budget: AttackBudget) -> PerturbationOutcome:
    """Equal deterministic power on every measured beam: delta_i = p_max/M."""
    budget.validate()
    x = np.asarray(x_m, dtype=np.float64)
    delta = np.full(x.shape[0], budget.p_max / x.shape[0])
    label_before = model.predict(x)
    label_after = model.predict(x + delta)
    return PerturbationOutcome(
        delta=delta, eps_used=budget.p_max, label_before=label_before,
        label_after=label_after, misclassified=label_after != y_true,
    )


# ---------------------------------------------------------------------------
# batched lock-step variants (identical search semantics, one model pass per
# bisection step for all samples)

def budgets_for(x_batch: np.ndarray, psr_db: float) -> np.ndarray:
    """Per-sample p_max values for a batch."""
    return 10.0 ** (psr_db / 10.0) * np.abs(x_batch).sum(axis=1)


def _normalize_rows(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    l1 = np.abs(grad).sum(axis=1)
    ok = l1 > 0.0
    safe = np.where(ok, l1, 1.0)
    return grad / safe[:, None], ok


def fgm_batch(model: Model, x_batch: np.ndarray, y_true: np.ndarray,
              p_max: np.ndarray,
              eps_acc_fraction: float = DEFAULT_EPS_ACC_FRACTION) -> dict:
    n, n_classes = len(x_batch), model.n_classes
    label_before = model.predict(x_batch)
    active = label_before == y_true
    grad = model.input_gradient(x_batch, np.eye(n_classes)[y_true])
    direction, ok = _normalize_rows(grad)
    searching = active & ok

    eps_min = np.zeros(n)
    eps_max = p_max.copy()
    for _ in range(_n_bisect_steps(eps_acc_fraction)):
        eps_avg = 0.5 * (eps_min + eps_max)
        still = model.predict(x_batch + eps_avg[:, None] * direction) == y_true
        eps_min = np.where(searching & still, eps_avg, eps_min)
        eps_max = np.where(searching & ~still, eps_avg, eps_max)

    eps_used = np.where(searching, eps_max, 0.0)
    delta = eps_used[:, None] * direction
    label_after = model.predict(x_batch + delta)
    label_after = np.where(searching, label_after, label_before)
    return {
        "delta": delta,
        "eps_used": eps_used,
        "label_before": label_before,
        "label_after": label_after,
        "misclassified": label_after != y_true,
        "target_index": np.full(n, -1, dtype=np.int64),
        "target_hit": np.zeros(n, dtype=bool),
    }


def kworst_batch(model: Model, x_batch: np.ndarray, y_true: np.ndarray,
                 order: np.ndarray, p_max: np.ndarray,
                 eps_acc_fraction: float = DEFAULT_EPS_ACC_FRACTION) -> dict:
    """Lock-step k-worst attack; ``order`` holds each sample's targets,
    worst first, shape (n, k)."""
    n, n_classes = len(x_batch), model.n_classes
    k = order.shape[1]
    label_before = model.predict(x_batch)
    active = label_before == y_true

    delta = np.zeros_like(x_batch)
    eps_used = np.zeros(n)
    label_after = label_before.copy()
    target_index = np.full(n, -1, dtype=np.int64)
    target_hit = np.zeros(n, dtype=bool)
    # clean-misclassified rows short-circuit; a prediction already inside
    # the worst set counts as a hit without any perturbation
    pre_hit = ~active & (order == label_before[:, None]).any(axis=1)
    target_index[pre_hit] = label_before[pre_hit]
    target_hit |= pre_hit

    done = ~active
    steps = _n_bisect_steps(eps_acc_fraction)
    for slot in range(k):
        if done.all():
            break
        targets = order[:, slot]
        grad = model.input_gradient(x_batch, np.eye(n_classes)[targets])
        direction, ok = _normalize_rows(grad)
        trying = ~done & ok & (targets != y_true)

        eps_min = np.zeros(n)
        eps_max = p_max.copy()
        for _ in range(steps):
            eps_avg = 0.5 * (eps_min + eps_max)
            still = model.predict(x_batch - eps_avg[:, None] * direction) == y_true
            eps_min = np.where(trying & still, eps_avg, eps_min)
            eps_max = np.where(trying & ~still, eps_avg, eps_max)
        eps_avg = 0.5 * (eps_min + eps_max)
        candidate = x_batch - eps_avg[:, None] * direction
        pred = model.predict(candidate)
        hit = pred == targets

        delta[trying] = -eps_avg[trying, None] * direction[trying]
        eps_used[trying] = eps_avg[trying]
        label_after[trying] = pred[trying]
        target_index[trying] = targets[trying]
        target_hit[trying] = hit[trying]
        done = done | (trying & hit)

    return {
        "delta": delta,
        "eps_used": eps_used,
        "label_before": label_before,
        "label_after": label_after,
        "misclassified": label_after != y_true,
        "target_index": target_index,
        "target_hit": target_hit,
    }


def gaussian_batch(model: Model, x_batch: np.ndarray, y_true: np.ndarray,
                   p_max: np.ndarray, streams: list) -> dict:
    n = len(x_batch)
    raw = np.stack([st.standard_normal(x_batch.shape[1]) for st in streams])
    l1 = np.abs(raw).sum(axis=1)
    delta = raw * (p_max / l1)[:, None]
    label_before = model.predict(x_batch)
    label_after = model.predict(x_batch + delta)
    return {
        "delta": delta,
        "eps_used": p_max.copy(),
        "label_before": label_before,
        "label_after": label_after,
        "misclassified": label_after != y_true,
        "target_index": np.full(n, -1, dtype=np.int64),
        "target_hit": np.zeros(n, dtype=bool),
    }


def uniform_batch(model: Model, x_batch: np.ndarray, y_true: np.ndarray,
                  p_max: np.ndarray) -> dict:
    n, m = x_batch.shape
    delta = np.repeat((p_max / m)[:, None], m, axis=1)
    label_before = model.predict(x_batch)
    label_after = model.predict(x_batch + delta)
    return {
        "delta": delta,
        "eps_used": p_max.copy(),
        "label_before": label_before,
        "label_after": label_after,
        "misclassified": label_after != y_true,
        "target_index": np.full(n, -1, dtype=np.int64),
        "target_hit": np.zeros(n, dtype=bool),
    }
