"""Acceptance gate: eight numbered criteria, one printed verdict line each.

Every test prints exactly one line of the form

    ACCEPTANCE <n> PASS|FAIL: <measured values>

to the terminal (bypassing capture) and then asserts the criterion at its
stated tolerance.  Criteria are evaluated as written; a failing line means
the measured behavior genuinely does not meet the stated bound.
"""

import glob
import os
import time

import numpy as np
import pytest

from beamsim.attacks import (
    DEFAULT_EPS_ACC_FRACTION,
    budgets_for,
    fgm_direction,
    fgm_nontargeted,
    psr_to_budget,
)
from beamsim.cli import main as cli_main
from beamsim.config import default_run_config, save_run_config
from beamsim.dataio import sha256_file
from beamsim.evaluation import (
    CONTROL_NAME,
    SweepSpec,
    psr_sweep,
    top1_accuracy,
)
from beamsim.model import Model, ModelSpec

from conftest import eval_subset
from test_attacks import LinearSoftmaxModel, grid_min_flip_eps, onehot
from test_model import fd_check

LOW_PSR = (-40.0, -30.0, -20.0)
HIGH_PSR = (-10.0, -5.0)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {number}: {detail}"


def curve_by(sweep, attack, k=None):
    for curve in sweep.curves:
        if curve.attack == attack and curve.k == k:
            return curve
    raise AssertionError(f"curve {attack!r} k={k} missing")


def point_at(curve, psr_db):
    return next(pt for pt in curve.points if pt.psr_db == psr_db)


# ---------------------------------------------------------------------------
# 1. clean classifier quality


def test_criterion_1_clean_accuracy(desk_model, desk_dataset, capsys):
    """Held-out top-1 accuracy of the trained network reaches at least
    0.70 on the full test split (chance is 1/24)."""
    ids = desk_dataset.split_indices("test")
    acc = top1_accuracy(desk_model, desk_dataset.x_m[ids],
                        desk_dataset.labels[ids].astype(np.int64))
    verdict(capsys, 1, acc >= 0.70,
            f"held-out top-1 accuracy {acc:.4f} vs threshold 0.70 "
            f"(n={len(ids)}, chance {1 / 24:.3f})")


# ---------------------------------------------------------------------------
# 2. FGM vs jamming separation, low- and high-PSR regions


def test_criterion_2_fgm_vs_jamming_regions(desk_model, desk_dataset,
                                            capsys):
    """At every grid PSR in [-40, -20] dB FGM top-1 must sit >= 5 pp below
    both jamming baselines; at PSR >= -10 dB all three must agree within
    15 pp; the sweep itself must finish within 5 minutes."""
    spec = SweepSpec(attacks=["fgm_nontargeted", "gaussian", "uniform"])
    start = time.perf_counter()
    sweep = psr_sweep(desk_model, desk_dataset, spec)
    elapsed = time.perf_counter() - start

    fgm = curve_by(sweep, "fgm_nontargeted")
    gauss = curve_by(sweep, "gaussian")
    unif = curve_by(sweep, "uniform")

    worst_margin = np.inf
    worst_at = None
    for psr in LOW_PSR:
        for base in (gauss, unif):
            margin = point_at(base, psr).top1_acc - point_at(fgm, psr).top1_acc
            if margin < worst_margin:
                worst_margin, worst_at = margin, psr
    separation_ok = worst_margin >= 0.05

    worst_spread = 0.0
    for psr in HIGH_PSR:
        accs = [point_at(c, psr).top1_acc for c in (fgm, gauss, unif)]
        worst_spread = max(worst_spread, max(accs) - min(accs))
    agreement_ok = worst_spread <= 0.15

    runtime_ok = elapsed <= 300.0
    verdict(capsys, 2, separation_ok and agreement_ok and runtime_ok,
            f"low-PSR worst FGM-vs-jamming margin {worst_margin * 100:+.1f} pp "
            f"at {worst_at:g} dB (need >= +5.0), high-PSR spread "
            f"{worst_spread * 100:.1f} pp (need <= 15.0), "
            f"runtime {elapsed:.0f}s (need <= 300)")


# ---------------------------------------------------------------------------
# 3. FGM severity at -20 dB


def test_criterion_3_fgm_severity(desk_sweep, capsys):
    """FGM at PSR -20 dB must cut top-1 accuracy to at most half of the
    clean accuracy."""
    fgm_acc = point_at(curve_by(desk_sweep, "fgm_nontargeted"), -20.0).top1_acc
    clean = desk_sweep.clean_accuracy
    ratio = fgm_acc / clean
    verdict(capsys, 3, fgm_acc <= 0.5 * clean,
            f"FGM top-1 at -20 dB is {fgm_acc:.4f} = {ratio * 100:.0f}% of "
            f"clean {clean:.4f} (need <= 50%)")


# ---------------------------------------------------------------------------
# 4. k-worst trends


def test_criterion_4a_kworst_monotone(desk_sweep, capsys):
    """N-k accuracy under the k-worst attack is non-increasing in PSR for
    every k and both beam orderings."""
    worst_uptick = 0.0
    worst_at = None
    for attack in ("kworst_true_order", "kworst_dnn_order"):
        for k in (4, 8, 12):
            pts = curve_by(desk_sweep, attack, k).points
            for a, b in zip(pts, pts[1:]):
                uptick = b.nk_acc - a.nk_acc
                if uptick > worst_uptick:
                    worst_uptick = uptick
                    worst_at = (attack, k, b.psr_db)
    ok = worst_uptick <= 0.0
    detail = "n-k accuracy non-increasing for all k and both orderings" \
        if ok else (f"uptick of {worst_uptick * 100:.2f} pp at "
                    f"{worst_at[0]} k={worst_at[1]} PSR {worst_at[2]:g} dB")
    verdict(capsys, "4a", ok, detail)


def test_criterion_4b_real_order_stronger(desk_sweep, capsys):
    """At PSR -10 dB the real-RSS ordering must be at least as damaging as
    the DNN-output ordering for every k."""
    gaps = {}
    for k in (4, 8, 12):
        true_nk = point_at(curve_by(desk_sweep, "kworst_true_order", k),
                           -10.0).nk_acc
        dnn_nk = point_at(curve_by(desk_sweep, "kworst_dnn_order", k),
                          -10.0).nk_acc
        gaps[k] = (true_nk, dnn_nk)
    ok = all(t <= d for t, d in gaps.values())
    detail = ", ".join(f"k={k}: real {t:.3f} vs dnn {d:.3f}"
                       for k, (t, d) in gaps.items())
    verdict(capsys, "4b", ok, detail)


def test_criterion_4c_jamming_saturation(desk_sweep, capsys):
    """Gaussian and uniform jamming N-k accuracy (k=12) at PSR >= -10 dB
    must lie in [0.35, 0.65]."""
    values = {}
    for attack in ("gaussian", "uniform"):
        for psr in HIGH_PSR:
            values[(attack, psr)] = point_at(curve_by(desk_sweep, attack),
                                             psr).nk_acc
    ok = all(0.35 <= v <= 0.65 for v in values.values())
    detail = ", ".join(f"{a}@{p:g}dB {v:.3f}" for (a, p), v in values.items())
    verdict(capsys, "4c", ok, detail + " (need each in [0.35, 0.65])")


# ---------------------------------------------------------------------------
# 5. gradient oracle


def test_criterion_5_gradient_oracle(desk_model, desk_dataset, small_model,
                                     small_dataset, capsys):
    """Analytic input gradient matches central finite differences (step
    1e-4 on the standardized scale) with relative L2 error < 1e-5 on 100
    random (model, input, label) triples before training and 100 after."""
    x_pool = desk_dataset.x_m[desk_dataset.split_indices("train")]
    worst_pre = 0.0
    for i in range(10):  # 10 fresh random inits x 10 triples each
        model = Model.initialize(ModelSpec.for_dims(12, 24), rng_seed=300 + i)
        model.set_standardizer(x_pool[:2000])
        worst_pre = max(worst_pre, fd_check(model, x_pool, 10, seed=i))
    worst_post = max(
        fd_check(desk_model, x_pool, 50, seed=41),
        fd_check(small_model, small_dataset.x_m, 50, seed=42),
    )
    ok = worst_pre < 1e-5 and worst_post < 1e-5
    verdict(capsys, 5, ok,
            f"worst relative L2 error {worst_pre:.2e} pre-training, "
            f"{worst_post:.2e} post-training over 100 triples each "
            f"(need < 1e-5)")


# ---------------------------------------------------------------------------
# 6. bisection oracle


def test_criterion_6_bisection_oracle(desk_model, desk_dataset, capsys):
    """On 50 samples where the attack finds a flip within budget, eps_used
    must land within eps_acc of a dense grid scan (resolution eps_acc/10);
    on the hand-built 2-class linear model, within eps_acc of the
    closed-form boundary epsilon."""
    ids, x, labels, _ = eval_subset(desk_dataset, 400, seed=6)
    correct = np.nonzero(desk_model.predict(x) == labels)[0]
    checked = 0
    worst_grid_err = 0.0
    for i in correct:
        if checked >= 50:
            break
        y_true = int(labels[i])
        budget = psr_to_budget(-10.0, x[i])
        out = fgm_nontargeted(desk_model, x[i], y_true, budget)
        if not out.misclassified:
            continue
        direction = fgm_direction(desk_model, x[i], onehot(y_true))
        grid_eps = grid_min_flip_eps(desk_model, x[i], y_true, direction,
                                     budget.p_max, budget.eps_acc / 10.0)
        if grid_eps is None:
            continue
        worst_grid_err = max(worst_grid_err, abs(out.eps_used - grid_eps)
                             / budget.eps_acc)
        checked += 1
    grid_ok = checked == 50 and worst_grid_err <= 1.0

    linear = LinearSoftmaxModel(
        weights=np.array([[1.0, -0.4], [0.3, 0.8]]), biases=np.zeros(2))
    rng = np.random.default_rng(66)
    worst_closed_err = 0.0
    done = 0
    while done < 20:
        x2 = rng.uniform(0.5, 3.0, size=2)
        if linear.predict(x2) != 0:
            continue
        budget2 = psr_to_budget(0.0, x2)
        eps_star = linear.boundary_eps(x2)
        if not 0.0 < eps_star < budget2.p_max:
            continue
        out2 = fgm_nontargeted(linear, x2, 0, budget2)
        worst_closed_err = max(worst_closed_err,
                               abs(out2.eps_used - eps_star) / budget2.eps_acc)
        done += 1
    closed_ok = worst_closed_err <= 1.0

    verdict(capsys, 6, grid_ok and closed_ok,
            f"grid-scan deviation <= {worst_grid_err:.3f} * eps_acc over "
            f"{checked} flip samples, closed-form deviation <= "
            f"{worst_closed_err:.3f} * eps_acc over {done} linear cases "
            f"(need <= 1)")


# ---------------------------------------------------------------------------
# 7. budget invariant


def test_criterion_7_budget_invariant(desk_sweep, desk_dataset, capsys):
    """Every emitted outcome satisfies ||delta||_1 <= p_max + eps_acc, and
    the zero-perturbation control curve equals clean accuracy exactly."""
    x_eval = desk_dataset.x_m[desk_sweep.sample_ids]
    total = violations = 0
    for rec in desk_sweep.points:
        p_max = budgets_for(x_eval, rec.psr_db)
        eps_acc = p_max * DEFAULT_EPS_ACC_FRACTION
        total += len(rec.l1_delta)
        violations += int(np.sum(rec.l1_delta > p_max + eps_acc))
    control_pts = curve_by(desk_sweep, CONTROL_NAME).points
    control_ok = all(pt.top1_acc == desk_sweep.clean_accuracy
                     for pt in control_pts)
    ok = violations == 0 and control_ok
    verdict(capsys, 7, ok,
            f"{total - violations}/{total} outcomes within budget, control "
            f"curve {'equals' if control_ok else 'differs from'} clean "
            f"accuracy {desk_sweep.clean_accuracy:.4f} at all "
            f"{len(control_pts)} PSRs")


# ---------------------------------------------------------------------------
# 8. end-to-end determinism


def reduced_config(out_dir) -> str:
    cfg = default_run_config()
    cfg.apply_seed(3001)
    cfg.n_samples = 6000
    cfg.train.epochs = 3
    cfg.sweep.psr_grid_db = [-20.0, -10.0]
    cfg.sweep.k_values = [4]
    cfg.sweep.n_test_samples = 200
    cfg.paths.out_dir = str(out_dir)
    path = os.path.join(str(out_dir), "run.yaml")
    os.makedirs(str(out_dir), exist_ok=True)
    save_run_config(cfg, path)
    return path


def run_hashes(out_dir, cfg_path) -> dict:
    for command in ("generate", "train", "attack"):
        rc = cli_main([command, "--config", cfg_path, "--quiet"])
        assert rc == 0, f"{command} failed"
    hashes = {
        "dataset": sha256_file(os.path.join(str(out_dir), "dataset.bin")),
        "model": sha256_file(os.path.join(str(out_dir), "model.bin")),
    }
    for kind in ("curves", "per_sample"):
        (path,) = glob.glob(os.path.join(str(out_dir), f"{kind}_*.csv"))
        hashes[kind] = sha256_file(path)
    return hashes


def test_criterion_8_determinism(tmp_path, capsys):
    """Two end-to-end pipeline runs from the same config must produce
    byte-identical dataset, model, and result CSV files (reduced scale so
    the double run stays fast; every stage is the same code path)."""
    h1 = run_hashes(tmp_path / "run1", reduced_config(tmp_path / "run1"))
    h2 = run_hashes(tmp_path / "run2", reduced_config(tmp_path / "run2"))
    same = {name: h1[name] == h2[name] for name in h1}
    ok = all(same.values())
    detail = ", ".join(
        f"{name} {'identical' if match else 'DIFFERS'}"
        for name, match in same.items()
    )
    verdict(capsys, 8, ok, detail)
