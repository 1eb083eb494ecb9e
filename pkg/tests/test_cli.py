"""End-to-end CLI tests: the generate/train/attack/report pipeline runs
in-process at reduced scale, exit codes map as documented, and the
override flags behave."""

import glob
import os
import shutil
import subprocess
import sys

import pytest
import yaml

from beamsim.cli import main
from beamsim.config import default_run_config, save_run_config
from beamsim.dataio import sha256_file
from beamsim.evaluation import parse_curves_csv, parse_per_sample_csv


def make_config(out_dir, **overrides) -> str:
    """Write a reduced-scale run config and return its path."""
    cfg = default_run_config()
    cfg.apply_seed(2101)
    cfg.n_samples = 6000
    cfg.train.epochs = 4
    cfg.sweep.psr_grid_db = [-20.0, -10.0]
    cfg.sweep.k_values = [4]
    cfg.sweep.n_test_samples = 300
    cfg.paths.out_dir = str(out_dir)
    for key, value in overrides.items():
        obj = cfg
        *parents, leaf = key.split(".")
        for name in parents:
            obj = getattr(obj, name)
        setattr(obj, leaf, value)
    path = os.path.join(str(out_dir), "run.yaml")
    os.makedirs(str(out_dir), exist_ok=True)
    save_run_config(cfg, path)
    return path


def one(pattern):
    matches = glob.glob(pattern)
    assert len(matches) == 1, f"expected one match for {pattern}: {matches}"
    return matches[0]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full generate -> train -> attack run in one output directory."""
    out = tmp_path_factory.mktemp("cli_run")
    cfg_path = make_config(out)
    for command in ("generate", "train", "attack"):
        rc = main([command, "--config", cfg_path, "--quiet"])
        assert rc == 0, f"{command} failed"
    return {"out": str(out), "cfg": cfg_path}


# ---------------------------------------------------------------------------
# happy path


def test_generate_artifacts(pipeline):
    assert os.path.exists(os.path.join(pipeline["out"], "dataset.bin"))
    assert os.path.exists(os.path.join(pipeline["out"], "dataset.csv"))


def test_train_artifacts(pipeline):
    assert os.path.exists(os.path.join(pipeline["out"], "model.bin"))
    history = os.path.join(pipeline["out"], "history.csv")
    with open(history, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    assert len(lines) == 1 + 4  # header + one row per epoch
    assert lines[0].startswith("epoch,")


def test_attack_artifacts_embed_hashes(pipeline):
    out = pipeline["out"]
    d8 = sha256_file(os.path.join(out, "dataset.bin"))[:8]
    m8 = sha256_file(os.path.join(out, "model.bin"))[:8]
    curves = one(os.path.join(out, "curves_*.csv"))
    per_sample = one(os.path.join(out, "per_sample_*.csv"))
    summary = one(os.path.join(out, "summary_*.txt"))
    for path in (curves, per_sample, summary):
        assert f"_{d8}_{m8}" in os.path.basename(path)
    rows = parse_curves_csv(curves)
    # control + fgm + 2 k-worst orders (k=4) + gaussian + uniform, 2 PSRs
    assert len(rows) == 6 * 2
    assert all(row["n"] == 300 for row in rows)
    sample_rows = parse_per_sample_csv(per_sample)
    assert len(sample_rows) == 6 * 2 * 300


def test_report_passes_on_clean_run(pipeline, capsys):
    rc = main(["report", "--config", pipeline["cfg"]])
    out = capsys.readouterr().out
    assert rc == 0
    assert "expected orderings hold" in out
    assert "clean accuracy:" in out
    assert "kworst_true_order k=4" in out


def test_report_quiet_still_passes(pipeline, capsys):
    rc = main(["report", "--config", pipeline["cfg"], "--quiet"])
    captured = capsys.readouterr()
    assert rc == 0
    assert captured.out == ""


def test_generate_prints_summary(pipeline, tmp_path, capsys):
    cfg_path = make_config(tmp_path / "g", **{"n_samples": 400})
    rc = main(["generate", "--config", cfg_path])
    out = capsys.readouterr().out
    assert rc == 0
    assert "samples: 400" in out
    assert "subset indices:" in out
    assert "label histogram:" in out
    assert "sha256" in out


def test_generate_quiet_silences_stdout(tmp_path, capsys):
    cfg_path = make_config(tmp_path / "q", **{"n_samples": 400})
    rc = main(["generate", "--config", cfg_path, "--quiet"])
    captured = capsys.readouterr()
    assert rc == 0
    assert captured.out == ""


# ---------------------------------------------------------------------------
# determinism and overrides


def test_generate_twice_same_hash(tmp_path):
    cfg_a = make_config(tmp_path / "a", **{"n_samples": 800})
    cfg_b = make_config(tmp_path / "b", **{"n_samples": 800})
    assert main(["generate", "--config", cfg_a, "--quiet"]) == 0
    assert main(["generate", "--config", cfg_b, "--quiet"]) == 0
    h_a = sha256_file(str(tmp_path / "a" / "dataset.bin"))
    h_b = sha256_file(str(tmp_path / "b" / "dataset.bin"))
    assert h_a == h_b


def test_seed_override_changes_dataset(tmp_path):
    cfg = make_config(tmp_path / "s", **{"n_samples": 800})
    assert main(["generate", "--config", cfg, "--quiet"]) == 0
    base = sha256_file(str(tmp_path / "s" / "dataset.bin"))
    assert main(["generate", "--config", cfg, "--quiet",
                 "--seed", "999"]) == 0
    reseeded = sha256_file(str(tmp_path / "s" / "dataset.bin"))
    assert reseeded != base
    assert main(["generate", "--config", cfg, "--quiet",
                 "--seed", "999"]) == 0
    assert sha256_file(str(tmp_path / "s" / "dataset.bin")) == reseeded


def test_out_override_redirects_artifacts(tmp_path, capsys):
    cfg = make_config(tmp_path / "o", **{"n_samples": 400})
    other = tmp_path / "elsewhere"
    rc = main(["generate", "--config", cfg, "--quiet", "--out", str(other)])
    assert rc == 0
    assert os.path.exists(str(other / "dataset.bin"))
    assert not os.path.exists(str(tmp_path / "o" / "dataset.bin"))


def test_samples_override_on_generate(tmp_path, capsys):
    cfg = make_config(tmp_path / "n", **{"n_samples": 800})
    rc = main(["generate", "--config", cfg, "--samples", "150"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "samples: 150" in out


def test_samples_override_on_attack(pipeline, tmp_path, capsys):
    # Rerun the attack with a smaller test subset into a copied directory
    # so the fixture's artifacts stay intact.
    other = tmp_path / "small_attack"
    shutil.copytree(pipeline["out"], other)
    for stale in glob.glob(str(other / "curves_*.csv")):
        os.remove(stale)
    cfg = make_config(other)
    rc = main(["attack", "--config", cfg, "--quiet", "--samples", "40"])
    assert rc == 0
    rows = parse_curves_csv(one(str(other / "curves_*.csv")))
    assert all(row["n"] == 40 for row in rows)


def test_attack_warns_on_dataset_hash_mismatch(pipeline, tmp_path, capsys):
    other = tmp_path / "mismatch"
    shutil.copytree(pipeline["out"], other)
    cfg = make_config(other)
    # Regenerate the dataset under a different seed: same shapes, new hash.
    assert main(["generate", "--config", cfg, "--quiet", "--seed", "42"]) == 0
    rc = main(["attack", "--config", cfg, "--quiet", "--samples", "25"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "warning:" in captured.err
    assert "different dataset" in captured.err


# ---------------------------------------------------------------------------
# exit codes


def test_missing_config_exits_1(tmp_path, capsys):
    rc = main(["generate", "--config", str(tmp_path / "nope.yaml")])
    captured = capsys.readouterr()
    assert rc == 1
    assert "no such file" in captured.err


def test_invalid_config_exits_1(tmp_path, capsys):
    cfg_path = make_config(tmp_path)
    with open(cfg_path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    data["turbo"] = True
    with open(cfg_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh)
    rc = main(["train", "--config", cfg_path])
    captured = capsys.readouterr()
    assert rc == 1
    assert "turbo: unknown field" in captured.err


def test_bad_cli_arguments_exit_1(capsys):
    assert main(["explode"]) == 1
    assert main(["generate"]) == 1
    captured = capsys.readouterr()
    assert "error:" in captured.err


def test_train_without_dataset_exits_1(tmp_path, capsys):
    cfg_path = make_config(tmp_path / "empty")
    rc = main(["train", "--config", cfg_path])
    captured = capsys.readouterr()
    assert rc == 1
    assert "dataset: no such file" in captured.err


def test_report_without_results_exits_1(pipeline, tmp_path, capsys):
    other = tmp_path / "no_results"
    shutil.copytree(pipeline["out"], other)
    for stale in glob.glob(str(other / "curves_*.csv")):
        os.remove(stale)
    cfg = make_config(other)
    rc = main(["report", "--config", cfg])
    captured = capsys.readouterr()
    assert rc == 1
    assert "curves csv: no such file" in captured.err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_exits_2(pipeline, tmp_path, capsys):
    other = tmp_path / "diverge"
    shutil.copytree(pipeline["out"], other)
    cfg = make_config(other, **{"train.optimizer": "sgd",
                                "train.learning_rate": 1e160,
                                "train.epochs": 1})
    rc = main(["train", "--config", cfg, "--quiet"])
    captured = capsys.readouterr()
    assert rc == 2
    assert "error:" in captured.err


def test_ordering_violation_exits_3(pipeline, tmp_path, capsys):
    other = tmp_path / "doctored"
    shutil.copytree(pipeline["out"], other)
    cfg = make_config(other)
    curves = one(str(other / "curves_*.csv"))
    with open(curves, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    doctored = []
    for line in lines:
        if line.startswith("fgm_nontargeted,"):
            parts = line.split(",")
            parts[3] = "1.000000"  # top-1 above both jamming baselines
            line = ",".join(parts)
        doctored.append(line)
    with open(curves, "w", encoding="utf-8") as fh:
        fh.write("\n".join(doctored) + "\n")
    rc = main(["report", "--config", cfg, "--quiet"])
    captured = capsys.readouterr()
    assert rc == 3
    assert "ordering violation" in captured.err


def test_corrupt_curves_csv_exits_1(pipeline, tmp_path, capsys):
    other = tmp_path / "corrupt"
    shutil.copytree(pipeline["out"], other)
    cfg = make_config(other)
    curves = one(str(other / "curves_*.csv"))
    with open(curves, "a", encoding="utf-8") as fh:
        fh.write("uniform,,-10,not_a_number,0.5,0.1,100\n")
    rc = main(["report", "--config", cfg, "--quiet"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err


# ---------------------------------------------------------------------------
# module entry point


def test_module_help_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "beamsim", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    for name in ("generate", "train", "attack", "report"):
        assert name in proc.stdout


def test_module_no_args_exits_1():
    proc = subprocess.run(
        [sys.executable, "-m", "beamsim"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 1
    assert "error:" in proc.stderr
