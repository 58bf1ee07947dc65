import json

import pytest
from pydantic import ValidationError

from src.config import RunConfig, load_run_config
from src.schemas.exceptions import InvalidInputError


class TestRunConfig:

    def test_defaults(self):
        cfg = load_run_config()
        assert cfg.seed == 0 and cfg.workers == 1
        assert cfg.n1 == 120 and cfg.em_iterations == 20
        assert cfg.suv.short_sec == 20.0
        assert cfg.snorm.enabled
        assert cfg.cost.p_target == 0.01

    def test_experiment_noise_isotropic_by_default(self):
        assert load_run_config().experiment.utterance_anisotropy == 0.0
        cfg = load_run_config(experiment={"utterance_anisotropy": 3.0})
        assert cfg.experiment.utterance_anisotropy == 3.0
        assert cfg.experiment.dim == load_run_config().experiment.dim

    def test_environment_is_ignored(self, monkeypatch):
        monkeypatch.setenv("SEED", "42")
        assert RunConfig().seed == 0

    def test_file_values(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 7, "suv": {"copies": 3}, "experiment": {"n_seeds": 2}}))
        cfg = load_run_config(path)
        assert cfg.seed == 7
        assert cfg.suv.copies == 3
        assert cfg.suv.short_sec == 20.0
        assert cfg.experiment.n_seeds == 2

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 7, "workers": 2, "suv": {"copies": 3, "short_sec": 10.0}}))
        cfg = load_run_config(path, seed=9, suv={"copies": 5}, workers=None)
        assert cfg.seed == 9
        assert cfg.workers == 2
        # Nested overrides merge into the file's section
        assert cfg.suv.copies == 5
        assert cfg.suv.short_sec == 10.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError) as exc:
            load_run_config(tmp_path / "absent.json")
        assert "not found" in exc.value.message

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(InvalidInputError):
            load_run_config(path)

    def test_invalid_values(self):
        with pytest.raises(ValidationError):
            load_run_config(workers=0)
        with pytest.raises(ValidationError):
            load_run_config(suv={"short_sec": 200.0})
        with pytest.raises(ValidationError):
            load_run_config(experiment={"lda_dim": 60, "dim": 50})
        with pytest.raises(ValidationError):
            load_run_config(log_level="chatty")

    def test_log_level_normalised(self):
        assert load_run_config(log_level="debug").log_level == "DEBUG"

    def test_to_json_is_stable(self):
        first = load_run_config(seed=3).to_json()
        assert first == load_run_config(seed=3).to_json()
        assert json.loads(first)["seed"] == 3
