import json
from pathlib import Path

import pytest
import yaml

from cartomap.cli import main
from cartomap.pipeline import Pipeline

STAGES = (
    "ingest",
    "vectorize",
    "embed",
    "knn",
    "project",
    "cluster",
    "export",
    "raster",
    "index",
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    rc = main(
        [
            "synth",
            "--topics",
            "3",
            "--docs-per-topic",
            "20",
            "--topic-vocab",
            "20",
            "--shared-vocab",
            "30",
            "--seed",
            "5",
            "--out",
            str(root / "corpus"),
        ]
    )
    assert rc == 0
    cfg = {
        "input_csv": str(root / "corpus" / "corpus.csv"),
        "out_dir": str(root / "map"),
        "m_min": 5,
        "min_docs": 2,
        "d": 16,
        "k": 5,
        "epochs": 40,
        "ks": [3],
        "zmax": 1,
        "seed": 5,
    }
    cfg_path = root / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return {"root": root, "cfg_path": cfg_path, "cfg": cfg, "out": root / "map"}


@pytest.fixture(scope="module")
def ran_all(workspace):
    rc = main(["--config", str(workspace["cfg_path"]), "run-all"])
    assert rc == 0
    return workspace


class TestSynth:
    def test_outputs(self, workspace):
        corpus = workspace["root"] / "corpus"
        assert (corpus / "corpus.csv").exists()
        assert (corpus / "mapping.json").exists()
        truth = json.loads((corpus / "truth.json").read_text())
        assert truth["topics"] == 3
        assert len(truth["topic_of_doc"]) == 60

    def test_deterministic(self, tmp_path):
        args = [
            "synth",
            "--topics",
            "2",
            "--docs-per-topic",
            "5",
            "--seed",
            "9",
            "--out",
        ]
        assert main(args + [str(tmp_path / "a")]) == 0
        assert main(args + [str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "corpus.csv").read_bytes() == (
            tmp_path / "b" / "corpus.csv"
        ).read_bytes()


class TestRunAll:
    def test_artifacts_on_disk(self, ran_all):
        out = ran_all["out"]
        for rel in (
            "corpus.jsonl",
            "catalog.json",
            "snapshot/manifest.json",
            "snapshot/entities.jsonl",
            "snapshot/geometry.bin",
            "snapshot/related.json",
            "layers.json",
            "layers/articles/0/0/0.png",
            "layers/authors/1/1/1.png",
            "index/facets.json",
            "index/facets.bin",
            "index/tiles.json",
            "index/tiles.bin",
        ):
            assert (out / rel).exists(), rel

    def test_manifest_per_stage(self, ran_all):
        mdir = ran_all["out"] / "manifests"
        names = {p.stem for p in mdir.glob("*.json")}
        assert names == set(STAGES)
        for stage in STAGES:
            m = json.loads((mdir / f"{stage}.json").read_text())
            assert m["stage"] == stage
            assert set(m) >= {"inputs", "params", "outputs", "elapsed_s"}
            for h in m["inputs"].values():
                assert len(h) == 64

    def test_rerun_skips_every_stage(self, ran_all, capsys):
        rc = main(["--config", str(ran_all["cfg_path"]), "run-all"])
        captured = capsys.readouterr()
        assert rc == 0
        for stage in STAGES:
            assert f"[{stage}] skipped (up to date)" in captured.out
        assert "stage" in captured.out  # timing table header

    def test_param_change_reruns_stage(self, ran_all, capsys):
        cfg_path = str(ran_all["cfg_path"])
        rc = main(["--config", cfg_path, "raster", "--sigma", "2.5"])
        captured = capsys.readouterr()
        assert rc == 0
        assert "[raster] done in" in captured.out
        m = json.loads((ran_all["out"] / "manifests" / "raster.json").read_text())
        assert m["params"]["sigma"] == 2.5
        # restore the configured value for later tests
        assert main(["--config", cfg_path, "raster"]) == 0
        capsys.readouterr()

    def test_flag_beats_config(self, workspace, tmp_path):
        rc = main(
            [
                "--config",
                str(workspace["cfg_path"]),
                "--out-dir",
                str(tmp_path / "m2"),
                "ingest",
                "--min-docs",
                "4",
            ]
        )
        assert rc == 0
        m = json.loads((tmp_path / "m2" / "manifests" / "ingest.json").read_text())
        assert m["params"]["min_docs"] == 4


class TestErrors:
    def test_missing_predecessor_names_stage(self, tmp_path, capsys):
        rc = main(["--out-dir", str(tmp_path / "empty"), "vectorize"])
        captured = capsys.readouterr()
        assert rc == 1
        assert "run stage 'ingest' first" in captured.err

    def test_missing_input_csv(self, tmp_path, capsys):
        rc = main(["--out-dir", str(tmp_path / "x"), "ingest"])
        assert rc == 1
        assert "input" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("frobnicate: 3\n")
        rc = main(["--config", str(bad), "export"])
        assert rc == 1
        assert "unknown config keys: frobnicate" in capsys.readouterr().err

    def test_config_not_a_mapping(self, tmp_path, capsys):
        bad = tmp_path / "list.yaml"
        bad.write_text("- 1\n- 2\n")
        rc = main(["--config", str(bad), "export"])
        assert rc == 1
        assert "key-value mapping" in capsys.readouterr().err

    def test_nonexistent_config_path(self, capsys):
        rc = main(["--config", "/no/such/config.yaml", "run-all"])
        assert rc == 1

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_internal_error_exit_2(self, tmp_path, monkeypatch, capsys):
        def boom(self):
            raise RuntimeError("wires crossed")

        monkeypatch.setattr(Pipeline, "ingest", boom)
        rc = main(["--out-dir", str(tmp_path / "y"), "ingest"])
        assert rc == 2
        assert "wires crossed" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "run-all" in capsys.readouterr().out
