import json

import pandas as pd
import pytest

from src.cli import build_parser, main
from src.config import DATA_DIR_ENV


@pytest.fixture
def schema_file(tmp_path):
    path = tmp_path / "schema.txt"
    path.write_text("# small schema\nwmc\ncbo\nloc\n")
    return str(path)


@pytest.fixture(autouse=True)
def no_data_dir(monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)


def run(*argv) -> int:
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_no_command(self, capsys):
        assert run() == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, tmp_path):
        assert run("report", "--records", tmp_path / "r.jsonl", "--out", tmp_path, "--bogus") == 1

    def test_missing_required_option(self):
        assert run("simplify", "--strategy", "rtds", "--out", "x.csv") == 1

    def test_bad_strategy_value(self, tmp_path):
        assert run("simplify", "--target", "a-1", "--strategy", "magic", "--out", tmp_path / "x.csv") == 1

    def test_repository_is_required(self, tmp_path, capsys):
        assert run("experiment", "--out", tmp_path / "out") == 1
        assert "RITDS_DATA_DIR" in capsys.readouterr().err

    def test_repository_from_the_environment(self, monkeypatch, repo_dir, schema_file, tmp_path):
        monkeypatch.setenv(DATA_DIR_ENV, str(repo_dir))
        assert run("ingest", "--schema", schema_file, "--out", tmp_path / "norm") == 0

    def test_missing_column_is_a_data_error(self, tmp_path, schema_file, capsys):
        repo = tmp_path / "bad"
        repo.mkdir()
        (repo / "alpha-1.csv").write_text("wmc,cbo,bug\n1,2,0\n")
        assert run("ingest", "--repo", repo, "--schema", schema_file, "--out", tmp_path / "out") == 2
        assert "loc" in capsys.readouterr().err

    def test_unknown_target_gives_a_hint(self, repo_dir, schema_file, tmp_path, capsys):
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "delta-1",
                   "--strategy", "none", "--out", tmp_path / "tds.csv")
        assert code == 2
        assert "hint: known releases" in capsys.readouterr().err

    def test_help(self):
        assert run("--help") == 0


class TestCommands:
    def test_ingest(self, repo_dir, schema_file, tmp_path, capsys):
        out = tmp_path / "norm"
        assert run("ingest", "--repo", repo_dir, "--schema", schema_file, "--out", out) == 0
        summary = pd.read_csv(out / "summary.csv")
        assert summary["Release"].tolist() == ["alpha-1.0", "alpha-2.0", "beta-1.0", "beta-1.1", "gamma-0.9"]
        assert summary["#Instances"].tolist() == [40, 36, 30, 44, 28]
        assert (out / "beta-1.1.csv").is_file()
        assert "alpha-2.0" in capsys.readouterr().out

    def test_ingest_named_files(self, schema_file, tmp_path):
        raw = tmp_path / "raw"
        raw.mkdir()
        (raw / "ant-1.7.csv").write_text("name,wmc,cbo,loc,bug\norg.A,3,1,10,0\norg.B,1,0,5,2\n")
        (raw / "ivy-2.0.csv").write_text("wmc,cbo,loc,bug\n1,1,1,1\n0,2,4,0\n3,3,3,0\n")
        out = tmp_path / "norm"
        code = run("ingest", "--schema", schema_file, "--input", raw / "ant-1.7.csv", raw / "ivy-2.0.csv",
                   "--out", out)
        assert code == 0
        summary = pd.read_csv(out / "summary.csv")
        assert summary["Release"].tolist() == ["ant-1.7", "ivy-2.0"]
        assert summary["#Defects"].tolist() == [1, 1]
        frame = pd.read_csv(out / "ant-1.7.csv")
        assert frame["log_transformed"].eq(1).all()

    def test_ingest_missing_input_file(self, schema_file, tmp_path):
        assert run("ingest", "--schema", schema_file, "--input", tmp_path / "nope.csv", "--out", tmp_path) == 1

    def test_ingest_takes_files_or_a_directory_not_both(self, repo_dir, schema_file, tmp_path):
        code = run("ingest", "--schema", schema_file, "--repo", repo_dir, "--input", repo_dir / "alpha-1.0.csv",
                   "--out", tmp_path / "out")
        assert code == 1

    @pytest.mark.parametrize("target", ["alpha:1.0", "alpha-1.0"])
    def test_simplify_target_forms(self, repo_dir, schema_file, tmp_path, target):
        out = tmp_path / "tds.csv"
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", target,
                   "--strategy", "rtds", "--r", 1, "--out", out)
        assert code == 0
        provenance = json.loads(out.with_name("tds.csv.provenance.json").read_text())
        assert provenance["target"] == "alpha-1.0"

    def test_simplify_writes_instances_and_provenance(self, repo_dir, schema_file, tmp_path):
        out = tmp_path / "tds" / "alpha.csv"
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "alpha-1.0",
                   "--strategy", "ritds2", "--r", 2, "--k", 3, "--out", out)
        assert code == 0
        frame = pd.read_csv(out)
        assert {"project", "version", "wmc", "cbo", "loc"} <= set(frame.columns)
        assert "alpha" not in set(frame["project"])
        assert len(frame) <= 40
        provenance = json.loads(out.with_name("alpha.csv.provenance.json").read_text())
        assert provenance["target"] == "alpha-1.0"
        assert provenance["requested"] == "riTDS-2"

    def test_simplify_without_r(self, repo_dir, schema_file, tmp_path):
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "alpha-1.0",
                   "--strategy", "rtds", "--out", tmp_path / "tds.csv")
        assert code == 2

    def test_ritds_rho_needs_rules(self, repo_dir, schema_file, tmp_path):
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "alpha-1.0",
                   "--strategy", "ritds-rho", "--r", 1, "--out", tmp_path / "tds.csv")
        assert code == 1

    def test_ritds_rho_applies_a_rule_file(self, repo_dir, schema_file, tmp_path):
        rules = tmp_path / "rules.json"
        rules.write_text(json.dumps({"rules": [{
            "classifier": "NB", "measure": "f_measure", "combination": "rho_plus",
            "rho_plus": 0.0, "rho_minus": None, "accuracy": 1.0, "n_pairs": 4,
        }]}))
        out = tmp_path / "tds.csv"
        code = run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "alpha-1.0",
                   "--strategy", "ritds-rho", "--r", 1, "--rules", rules, "--classifier", "nb", "--out", out)
        assert code == 0
        provenance = json.loads(out.with_name("tds.csv.provenance.json").read_text())
        assert provenance["requested"] == "riTDS-rho"
        assert provenance["strategy"] == "riTDS-1"

    def test_predict_on_a_simplified_training_set(self, repo_dir, schema_file, tmp_path):
        tds = tmp_path / "tds.csv"
        assert run("simplify", "--repo", repo_dir, "--schema", schema_file, "--target", "beta-1.0",
                   "--strategy", "rtds", "--r", 2, "--out", tds) == 0
        out = tmp_path / "pred"
        code = run("predict", "--train", tds, "--test", repo_dir / "beta-1.0.csv", "--classifier", "nb",
                   "--schema", schema_file, "--out", out)
        assert code == 0
        predictions = pd.read_csv(out / "predictions.csv")
        assert len(predictions) == 30
        assert predictions["score"].between(0, 1).all()
        document = json.loads((out / "measures.json").read_text())
        assert document["classifier"] == "NB"
        assert sum(document["confusion"].values()) == 30
        assert json.loads((out / "model.json").read_text())["kind"] == "NB"

    def test_predict_missing_file(self, schema_file, tmp_path):
        code = run("predict", "--train", tmp_path / "nope.csv", "--test", tmp_path / "nope.csv",
                   "--classifier", "lr", "--schema", schema_file, "--out", tmp_path / "out")
        assert code == 1

    def test_experiment_report_and_sweep(self, repo_dir, schema_file, tmp_path):
        out = tmp_path / "run"
        code = run("experiment", "--repo", repo_dir, "--schema", schema_file, "--classifiers", "nb",
                   "--strategies", "itds,ritds1,ritds2,ritds-rho", "--r", "1,2", "--k", 3, "--out", out)
        assert code == 0
        for name in ("records.jsonl", "config.json", "summary.csv", "wilcoxon.csv", "pairs.csv", "rho_rules.json"):
            assert (out / name).is_file()
        config = json.loads((out / "config.json").read_text())
        assert config["r_values"] == [1, 2]
        assert config["k"] == 3

        again = tmp_path / "again"
        assert run("report", "--records", out / "records.jsonl", "--out", again) == 0
        assert (again / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()

        pairs = pd.read_csv(out / "pairs.csv")
        if pairs.loc[pairs["measure"] == "f_measure", "dpr"].nunique() < 2:
            pytest.skip("too few distinct DPR values for a sweep")
        sweep = tmp_path / "sweep.json"
        assert run("sweep-rho", "--pairs", out / "pairs.csv", "--classifier", "NB", "--out", sweep) == 0
        document = json.loads(sweep.read_text())
        assert [s["combination"] for s in document["sweeps"]] == ["rho_plus", "rho_minus"]
        assert len(document["sweeps"][0]["curve"]["rho"]) == 102
        assert document["combined"]["accuracy"] >= max(s["accuracy"] for s in document["sweeps"])

    def test_sweep_single_assumption(self, tmp_path):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("target,dpr,measure1,measure2\nt1,0.5,0.2,0.4\nt2,1.0,0.3,0.1\nt3,2.0,0.6,0.2\n")
        out = tmp_path / "sweep.json"
        assert run("sweep-rho", "--pairs", pairs, "--assumption", "plus", "--out", out) == 0
        document = json.loads(out.read_text())
        assert document["n_pairs"] == 3
        assert "combined" not in document
        assert document["sweeps"][0]["accuracy"] == 1.0

    def test_report_missing_records(self, tmp_path):
        assert run("report", "--records", tmp_path / "records.jsonl", "--out", tmp_path) == 2


def test_parser_defaults():
    args = build_parser().parse_args(["experiment", "--repo", "data", "--out", "out"])
    assert args.r_values == [1, 2, 3]
    assert args.k == 10
    assert args.rho_measure == "f_measure"
    assert [c.value for c in args.classifiers] == ["NB", "LR", "DT"]
