import json
from pathlib import Path
from typing import Tuple

import pytest

import ranlab
from ranlab.core import constants
from ranlab.core.exceptions import ConfigError
from ranlab.main import main
from ranlab.pipelines import runner
from ranlab.pipelines import tilt as tilt_pipeline
from ranlab.pipelines.configuration import apply_overrides, config_hash, load_config
from ranlab.reporting.csv_writer import format_value, read_csv
from ranlab.workers import SeedOutcome, dispatch

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

TINY_TILT = {
    "experiment": "tilt",
    "seeds": [1],
    "tilt": {
        "env": {"n_rings": 1, "n_users": 100},
        "train": {"epochs": 2},
        "log_days": 10,
        "eval_days": 3,
        "eval_seeds": 1,
        "feature_counts": [5],
        "schemes": ["dm"],
    },
}


def write_config(path: Path, payload: dict, comment: str = "") -> Path:
    text = json.dumps(payload, indent=2)
    path.write_text(f"// {comment}\n{text}\n" if comment else text)
    return path


def square(seed: int, offset: int) -> SeedOutcome:
    return SeedOutcome(seed=seed, rows=[(seed, seed * seed + offset)])


@pytest.mark.parametrize("name", ["tilt.json", "tilt_smoke.json", "beam.json", "csi.json"])
def test_shipped_configs_validate(name):
    report = runner.validate(DATA_DIR / name)
    assert report.render().startswith("OK")


def test_validate_lists_defaulted_fields(tmp_path):
    path = write_config(tmp_path / "c.json", {"experiment": "tilt", "seeds": [1]})
    report = runner.validate(path)
    assert {"output_dir", "tilt", "beam", "csi"} <= set(report.defaulted)
    assert "  output_dir" in report.render().splitlines()


@pytest.mark.parametrize(
    "payload, key",
    [
        ({"experiment": "beam", "seeds": [1], "beam": {"alpha": 1.5}}, "beam.alpha"),
        ({"seeds": [1]}, "experiment"),
        ({"experiment": "tilt", "seeds": []}, "seeds"),
        ({"experiment": "tilt", "seeds": [1], "tilt": {"bogus": 1}}, "tilt.bogus"),
        ({"experiment": "radar", "seeds": [1]}, "experiment"),
        (
            {"experiment": "tilt", "seeds": [1], "tilt": {"env": {"n_rings": 0}, "feature_counts": [5, 20]}},
            "tilt.feature_counts",
        ),
    ],
)
def test_validate_locates_first_error(tmp_path, payload, key):
    path = write_config(tmp_path / "c.json", payload)
    with pytest.raises(ConfigError) as exc:
        runner.validate(path)
    assert exc.value.key == key


def test_missing_or_broken_file(tmp_path):
    with pytest.raises(ConfigError):
        runner.validate(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    with pytest.raises(ConfigError):
        runner.validate(broken)


def test_overrides_parse_json_values():
    raw = apply_overrides(
        {"experiment": "beam", "seeds": [1]},
        ["beam.alphas=[0.1, 0.9]", "beam.steps=7", "beam.pae_ablation=false", "output_dir=out"],
    )
    assert raw["beam"] == {"alphas": [0.1, 0.9], "steps": 7, "pae_ablation": False}
    assert raw["output_dir"] == "out"


@pytest.mark.parametrize("override", ["tilt.nope=1", "tilt.log_days.x=1", "no_equals_sign"])
def test_bad_overrides_are_config_errors(override):
    with pytest.raises(ConfigError):
        apply_overrides({"experiment": "tilt", "seeds": [1]}, [override])


def test_config_hash_covers_only_what_the_run_reads(tmp_path):
    a = write_config(tmp_path / "a.json", {"experiment": "tilt", "seeds": [1, 2], "output_dir": "x"})
    b = write_config(tmp_path / "b.json", {"output_dir": "y", "seeds": [1, 2], "experiment": "tilt"}, comment="same")
    cfg_a, _ = load_config(a)
    cfg_b, _ = load_config(b)
    assert config_hash(cfg_a) == config_hash(cfg_b)
    cfg_c, _ = load_config(a, ["seeds=[1, 3]"])
    assert config_hash(cfg_c) != config_hash(cfg_a)
    cfg_d, _ = load_config(a, ["beam.steps=7", "csi.epochs=3"])
    assert config_hash(cfg_d) == config_hash(cfg_a)
    cfg_e, _ = load_config(a, ["tilt.log_days=50"])
    assert config_hash(cfg_e) != config_hash(cfg_a)


def test_dispatch_orders_by_seed():
    outcomes = dispatch(square, [3, 1, 2], 10, jobs=1)
    assert [o.seed for o in outcomes] == [1, 2, 3]
    assert outcomes[2].rows == [(3, 19)]


def test_main_version(capsys):
    assert main(["version"]) == constants.EXIT_OK
    assert capsys.readouterr().out.strip() == ranlab.__version__


def test_main_validate(tmp_path, capsys):
    path = write_config(tmp_path / "c.json", TINY_TILT)
    assert main(["validate", str(path)]) == constants.EXIT_OK
    assert capsys.readouterr().out.startswith("OK")


def test_main_rejects_unknown_override(tmp_path, capsys):
    path = write_config(tmp_path / "c.json", TINY_TILT)
    code = main(["run", str(path), "--set", "tilt.nope=3"])
    assert code == constants.EXIT_CONFIG_ERROR
    assert "tilt.nope" in capsys.readouterr().err


def test_main_reports_invalid_value(tmp_path, capsys):
    path = write_config(tmp_path / "c.json", {"experiment": "beam", "seeds": [1], "beam": {"alpha": 1.5}})
    assert main(["validate", str(path)]) == constants.EXIT_CONFIG_ERROR
    assert "beam.alpha" in capsys.readouterr().err


def _csv_bytes(run_dir: Path) -> dict:
    return {str(p.relative_to(run_dir)): p.read_bytes() for p in sorted(run_dir.rglob("*.csv"))}


def test_tilt_run_is_reproducible(tmp_path):
    path = write_config(tmp_path / "c.json", TINY_TILT)
    first = runner.run(path, [f"output_dir={tmp_path / 'a'}"], jobs=1)
    runner.run(path, [f"output_dir={tmp_path / 'b'}"], jobs=1)
    a, b = _csv_bytes(tmp_path / "a" / "tilt"), _csv_bytes(tmp_path / "b" / "tilt")
    assert a == b
    assert {"gain_table.csv", "seed_1/summary.csv"} <= set(a)
    assert (tmp_path / "a" / "tilt" / "gain.svg").read_bytes() == (tmp_path / "b" / "tilt" / "gain.svg").read_bytes()

    manifest = json.loads((tmp_path / "a" / "tilt" / constants.MANIFEST_FILE).read_text())
    assert manifest["config_hash"] == first.config_hash
    assert manifest["aggregate_files"] == ["gain_table.csv", "gain.svg"]
    assert "seed_1/experience_log.jsonl" in manifest["seed_files"]["1"]
    assert manifest["versions"]["ranlab"] == ranlab.__version__


def test_worker_count_does_not_change_results(tmp_path):
    payload = dict(TINY_TILT, seeds=[1, 2])
    path = write_config(tmp_path / "c.json", payload)
    runner.run(path, [f"output_dir={tmp_path / 'serial'}"], jobs=1)
    runner.run(path, [f"output_dir={tmp_path / 'pool'}"], jobs=2)
    assert _csv_bytes(tmp_path / "serial" / "tilt") == _csv_bytes(tmp_path / "pool" / "tilt")


def test_output_dir_environment_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("RANLAB_OUTPUT_DIR", str(tmp_path / "env"))
    path = write_config(tmp_path / "c.json", dict(TINY_TILT, output_dir=str(tmp_path / "cfg")))
    runner.run(path, jobs=1)
    assert (tmp_path / "env" / "tilt" / constants.MANIFEST_FILE).is_file()
    assert not (tmp_path / "cfg").exists()


def _run_twice(tmp_path: Path, payload: dict) -> Tuple[Path, Path]:
    """Same config, once serially and once on two workers."""
    path = write_config(tmp_path / "c.json", payload)
    runner.run(path, [f"output_dir={tmp_path / 'a'}"], jobs=1)
    runner.run(path, [f"output_dir={tmp_path / 'b'}"], jobs=2)
    a, b = tmp_path / "a" / payload["experiment"], tmp_path / "b" / payload["experiment"]
    assert _csv_bytes(a) == _csv_bytes(b)
    for svg in a.glob("*.svg"):
        assert svg.read_bytes() == (b / svg.name).read_bytes()
    return a, b


def test_beam_run_is_reproducible(tmp_path):
    payload = {
        "experiment": "beam",
        "seeds": [1, 2],
        "beam": {
            "alphas": [0.0, 1.0],
            "alpha": 0.5,
            "pae_ablation": True,
            "steps": 10,
            "batch_size": 4,
            "actor_hidden": [4],
            "critic_hidden": [4],
            "trace_every": 5,
            "eval_rotations": 1,
            "grid_n": 5,
        },
    }
    run_dir, _ = _run_twice(tmp_path, payload)
    finals = read_csv(run_dir / "final_rates.csv")
    assert len(finals) == 4
    assert all(row["n_seeds"] == "2" for row in finals)
    assert (run_dir / "rate_region.svg").is_file()
    for name in ("boundary.csv", "trace.csv", "summary.csv"):
        assert (run_dir / "seed_2" / name).is_file()


def test_csi_run_is_reproducible(tmp_path):
    payload = {
        "experiment": "csi",
        "seeds": [1, 2],
        "csi": {
            "n_samples": 50,
            "epochs": 2,
            "latent_dims": [4, 2],
            "autoencoder": {"n_tx": 4, "bits": 2, "hidden": [8]},
        },
    }
    run_dir, other = _run_twice(tmp_path, payload)
    rows = read_csv(run_dir / "rate_distortion.csv")
    assert [row["feedback_bits"] for row in rows] == ["4", "8"]
    assert (run_dir / "rate_distortion.svg").is_file()
    feedback = run_dir / "seed_1" / "feedback_d2.jsonl"
    assert feedback.read_bytes() == (other / "seed_1" / "feedback_d2.jsonl").read_bytes()
    assert (run_dir / "seed_1" / "decoder_d4.json").is_file()


def test_csv_cells_are_stable():
    assert format_value(0.1) == "0.1"
    assert format_value(float("nan")) == ""
    assert format_value(True) == "true"
    assert format_value(3) == "3"

@pytest.mark.slow
def test_tilt_scheme_ordering_on_full_environment(tmp_path):
    cfg, _ = load_config(DATA_DIR / "tilt.json", ["seeds=[1, 2, 3, 4, 5]", "tilt.feature_counts=[5, 35]"])
    outcomes = dispatch(tilt_pipeline.run_seed, cfg.seeds, cfg, str(tmp_path), jobs=1)
    means = {(policy, fc): mean for policy, fc, mean, _, _ in tilt_pipeline.aggregate_rows(outcomes)}
    assert means[("propensity_dm", 35)] >= means[("dm", 35)] >= means[("rule_based", 5)]
    assert means[("propensity_dm", 35)] >= means[("propensity_dm", 5)]
