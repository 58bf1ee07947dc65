"""
End-to-end smoke run of every suv-plda command.

Usage:
    uv run python test.py

Runs synth -> train -> enroll -> score -> evaluate on a small synthetic
corpus inside WORK_DIR (a fresh temp directory when empty), then a short
run-experiment. Unit tests live in tests/ and run with pytest.
"""

import contextlib
import io
import json
import sys
import tempfile
from pathlib import Path

from src.cli import main

# ── Config ─────────────────────────────────────────────────────────────────────
WORK_DIR = ""          # e.g. "/tmp/suv-plda-smoke"; empty → temp directory
SEED     = 0

SMOKE_CONFIG = {
    "lda_dim": 8,
    "n1": 4,
    "em_iterations": 5,
    "suv": {"short_sec": 10.0, "full_sec": 60.0, "copies": 2},
    "snorm": {"cohort_size": 10},
    "experiment": {
        "dim": 10, "dev_speakers": 30, "dev_sessions": 3,
        "eval_speakers": 10, "eval_sessions": 3, "cohort_speakers": 10,
        "lda_dim": 8, "n1": 4, "n_seeds": 1, "full_sec": 60.0,
        "conditions": ["10sec-10sec", "10sec(2)-10sec"],
    },
}
# ───────────────────────────────────────────────────────────────────────────────

GREEN  = "\033[92m"
RED    = "\033[91m"
RESET  = "\033[0m"

PASS = f"{GREEN}PASS{RESET}"
FAIL = f"{RED}FAIL{RESET}"


def section(title: str):
    print(f"\n{'─' * 58}")
    print(f"  {title}")
    print("─" * 58)


def check(label: str, passed: bool, detail: str = ""):
    tag = PASS if passed else FAIL
    print(f"  [{tag}] {label}")
    if detail:
        print(f"         {detail}")


def run(*argv) -> tuple[int, str]:
    """Invoke the CLI in-process; returns (exit code, captured stdout)."""
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main([str(a) for a in argv])
    return code, out.getvalue()


def command(label: str, *argv) -> bool:
    try:
        code, _ = run(*argv)
        check(label, code == 0, f"exit code {code}")
        return code == 0
    except Exception as e:
        check(f"{label} raised", False, str(e))
        return False


# ── 1. Synthetic corpus ────────────────────────────────────────────────────────
def test_synth(work: Path, config: Path) -> bool:
    section("synth")
    ok = command("synth", "synth", "--config", config, "--seed", SEED, "--out-dir", work / "data")
    for name in ("dev_full.ivec", "dev_short.ivec", "cohort.ivec", "test_10s.ivec",
                 "pieces_10sec_2-10sec.map", "trials_10sec-10sec.txt"):
        present = (work / "data" / name).is_file()
        check(f"  {name}", present)
        ok = ok and present
    return ok


# ── 2. Training ────────────────────────────────────────────────────────────────
def test_training(work: Path, config: Path) -> bool:
    section("train-lda / estimate-suv / augment / train-plda")
    data, models = work / "data", work / "models"
    common = ("--config", config, "--seed", SEED)
    return all([
        command("train-lda", "train-lda", *common, "--ivectors", data / "dev_full.ivec",
                "--out", models / "lda.nmat"),
        command("estimate-suv", "estimate-suv", *common, "--full", data / "dev_full.ivec",
                "--short", data / "dev_short.ivec", "--lda", models / "lda.nmat", "--out", models / "suv.nmat"),
        command("augment", "augment", *common, "--ivectors", data / "dev_full.ivec",
                "--lda", models / "lda.nmat", "--suv", models / "suv.nmat", "--out", models / "augmented.ivec"),
        command("train-plda", "train-plda", *common, "--ivectors", models / "augmented.ivec",
                "--out", models / "plda.nmat"),
    ])


# ── 3. Enrollment, scoring, evaluation ─────────────────────────────────────────
def test_scoring(work: Path, config: Path) -> bool:
    section("enroll / score / snorm / evaluate")
    data, models, scores = work / "data", work / "models", work / "scores"
    common = ("--config", config, "--seed", SEED)
    model_args = ("--lda", models / "lda.nmat", "--plda", models / "plda.nmat")

    ok = command("enroll", "enroll", *common, "--pieces", data / "pieces_10sec_2-10sec.ivec",
                 "--enrol-map", data / "pieces_10sec_2-10sec.map", "--partitions", 2,
                 "--out", scores / "enrolled.ivec")
    ok &= command("score (raw)", "score", *common, *model_args, "--enrolled", scores / "enrolled.ivec",
                  "--test", data / "test_10s.ivec", "--trials", data / "trials_10sec_2-10sec.txt",
                  "--no-snorm", "--out", scores / "raw.txt")
    ok &= command("snorm", "snorm", *common, *model_args, "--scores", scores / "raw.txt",
                  "--enrolled", scores / "enrolled.ivec", "--test", data / "test_10s.ivec",
                  "--cohort", data / "cohort.ivec", "--out", scores / "snorm.txt")

    try:
        code, out = run("evaluate", *common, "--scores", scores / "snorm.txt",
                        "--trials", data / "trials_10sec_2-10sec.txt",
                        "--out", scores / "eval.json", "--det", scores / "det.csv")
        result = json.loads(out) if code == 0 else {}
        check("evaluate", code == 0,
              f"EER={100 * result.get('eer', float('nan')):.2f}%  minDCF={result.get('min_dcf', float('nan')):.4f}")
        ok &= code == 0
    except Exception as e:
        check("evaluate raised", False, str(e))
        ok = False
    return ok


# ── 4. Experiment runner ───────────────────────────────────────────────────────
def test_experiment(work: Path, config: Path) -> bool:
    section("run-experiment  (1 seed, small protocol)")
    try:
        code, out = run("run-experiment", "--config", config, "--seed", SEED, "--out-dir", work / "experiment")
        check("run-experiment", code == 0, f"exit code {code}")
        if code == 0:
            print()
            for line in out.splitlines():
                print(f"    {line}")
        return code == 0 and (work / "experiment" / "report.json").is_file()
    except Exception as e:
        check("run-experiment raised", False, str(e))
        return False


# ── 5. Error path ──────────────────────────────────────────────────────────────
def test_error_exit(work: Path, config: Path) -> bool:
    section("missing input → exit 1")
    code, _ = run("train-lda", "--ivectors", work / "absent.ivec", "--out", work / "never.nmat")
    check("exit code 1", code == 1, f"got {code}")
    return code == 1


# ── Runner ─────────────────────────────────────────────────────────────────────
if __name__ == "__main__":
    with tempfile.TemporaryDirectory(prefix="suv-plda-") as tmp:
        work = Path(WORK_DIR or tmp)
        work.mkdir(parents=True, exist_ok=True)
        config = work / "smoke.json"
        config.write_text(json.dumps(SMOKE_CONFIG, indent=2))
        print(f"\nWork dir: {work}\n")

        results = {
            "synth":       test_synth(work, config),
            "training":    test_training(work, config),
            "scoring":     test_scoring(work, config),
            "experiment":  test_experiment(work, config),
            "error_exit":  test_error_exit(work, config),
        }

    section("Summary")
    passed = sum(1 for v in results.values() if v)
    failed = len(results) - passed

    for name, ok in results.items():
        print(f"  [{PASS if ok else FAIL}] {name}")

    print(f"\n  {passed} passed · {failed} failed\n")
    sys.exit(0 if failed == 0 else 1)
