import csv
import json

import numpy as np
import pytest

from monolattice import Model
from monolattice.cli import main


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture()
def workspace(tmp_path):
    rng = np.random.default_rng(41)
    n = 160
    price = rng.random(n) * 100
    rating = rng.random(n) * 5
    y = price / 100 * (rating / 5) + 0.2 * price / 100 + 0.05 * rng.standard_normal(n)
    write_csv(
        tmp_path / "train.csv",
        ["price", "rating", "y"],
        [[repr(float(p)), repr(float(r)), repr(float(v))] for p, r, v in zip(price, rating, y)],
    )
    schema = {
        "label": "y",
        "features": [
            {"name": "price", "monotone": "increasing", "keypoints": 4},
            {"name": "rating", "monotone": "increasing", "keypoints": 4},
        ],
    }
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    return tmp_path


def run_train(ws, out_name="model.json", *extra):
    args = [
        "train",
        "--data", str(ws / "train.csv"),
        "--schema", str(ws / "schema.json"),
        "--out", str(ws / out_name),
        "--epochs", "8",
        "--seed", "7",
        *extra,
    ]
    return main(args)


class TestTrain:
    def test_smoke(self, workspace, capsys):
        assert run_train(workspace) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["model"] == str(workspace / "model.json")
        assert "rmse" in out["train_metrics"]
        model = Model.load(workspace / "model.json")
        assert model.violations() == []

    def test_same_flags_same_bytes(self, workspace):
        assert run_train(workspace, "a.json") == 0
        assert run_train(workspace, "b.json") == 0
        assert (workspace / "a.json").read_bytes() == (workspace / "b.json").read_bytes()

    def test_different_seed_differs(self, workspace):
        assert run_train(workspace, "a.json") == 0
        assert run_train(workspace, "b.json", "--seed", "8") == 0
        assert (workspace / "a.json").read_bytes() != (workspace / "b.json").read_bytes()

    def test_config_recorded_in_metadata(self, workspace):
        assert run_train(workspace, "m.json", "--workers", "2", "--sync-rounds", "2") == 0
        model = Model.load(workspace / "m.json")
        assert model.metadata["workers"] == 2
        assert model.metadata["sync_rounds"] == 2
        assert model.metadata["seed"] == 7

    def test_lattice_and_monotonic_overrides(self, workspace):
        code = run_train(
            workspace, "m.json", "--lattice", "3,2", "--monotonic", "+price,rating"
        )
        assert code == 0
        model = Model.load(workspace / "m.json")
        assert tuple(model.shape.sizes) == (3, 2)
        assert model.specs[0].monotone.value == "increasing"
        assert model.specs[1].monotone.value == "none"

    def test_decreasing_override_uses_equals_form(self, workspace):
        assert run_train(workspace, "m.json", "--monotonic=-price,+rating") == 0
        model = Model.load(workspace / "m.json")
        assert model.specs[0].monotone.value == "decreasing"
        assert model.specs[1].monotone.value == "increasing"

    def test_regularizer_flag(self, workspace):
        assert run_train(workspace, "m.json", "--regularizer", "torsion:0.01") == 0
        model = Model.load(workspace / "m.json")
        assert model.metadata["regularizers"] == [
            {"kind": "torsion", "weight": 0.01, "sample_count": None}
        ]

    def test_simplex_training(self, workspace):
        assert run_train(workspace, "m.json", "--kind", "simplex") == 0
        assert Model.load(workspace / "m.json").kind.value == "simplex"


class TestPredict:
    def test_output_matches_library(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        write_csv(workspace / "score.csv", ["price", "rating"], [["50.0", "2.5"], ["10.0", "4.0"]])
        code = main([
            "predict",
            "--model", str(workspace / "model.json"),
            "--data", str(workspace / "score.csv"),
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "score"
        got = [float(v) for v in lines[1:]]
        model = Model.load(workspace / "model.json")
        assert got[0] == model.predict_row([50.0, 2.5])
        assert got[1] == model.predict_row([10.0, 4.0])

    def test_out_file_and_kind_override(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        write_csv(workspace / "score.csv", ["price", "rating"], [["33.0", "1.7"]])
        for kind, name in ((None, "a.csv"), ("simplex", "b.csv")):
            args = [
                "predict",
                "--model", str(workspace / "model.json"),
                "--data", str(workspace / "score.csv"),
                "--out", str(workspace / name),
            ]
            if kind:
                args += ["--kind", kind]
            assert main(args) == 0
        a = float((workspace / "a.csv").read_text().splitlines()[1])
        b = float((workspace / "b.csv").read_text().splitlines()[1])
        assert a != b  # bilinear vs simplex disagree off the cell diagonal


class TestEvaluate:
    def test_metrics_json(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        code = main([
            "evaluate",
            "--model", str(workspace / "model.json"),
            "--data", str(workspace / "train.csv"),
            "--schema", str(workspace / "schema.json"),
        ])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert 0 < metrics["rmse"] < 0.2

    def test_label_flag_without_schema(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        code = main([
            "evaluate",
            "--model", str(workspace / "model.json"),
            "--data", str(workspace / "train.csv"),
            "--label", "y",
        ])
        assert code == 0
        assert "rmse" in json.loads(capsys.readouterr().out)


class TestCheck:
    def test_clean_model_passes(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        code = main(["check", "--model", str(workspace / "model.json")])
        assert code == 0
        assert capsys.readouterr().out.strip() == "0 violations"

    def test_violating_file_fails_with_report(self, workspace, capsys):
        assert run_train(workspace) == 0
        capsys.readouterr()
        model = Model.load(workspace / "model.json")
        model.theta = np.array([0.0, 1.0, 0.4, 0.4])
        model.save(workspace / "bad.json")
        code = main(["check", "--model", str(workspace / "bad.json")])
        assert code == 1
        out = capsys.readouterr().out
        assert "violation: theta[1, 0]=1 > theta[1, 1]=0.4 (gap 0.6)" in out
        assert out.strip().endswith("1 violations")


class TestBench:
    def test_csv_output(self, workspace, capsys):
        code = main([
            "bench",
            "--min-d", "2",
            "--max-d", "3",
            "--kinds", "multilinear,simplex",
            "--target-time", "0.001",
            "--repeats", "1",
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "d,kind,ns_per_op"
        assert len(lines) == 1 + 2 * 2
        for line in lines[1:]:
            d, kind, ns = line.split(",")
            assert int(d) in (2, 3)
            assert kind in ("multilinear", "simplex")
            assert float(ns) > 0


class TestErrors:
    def test_missing_data_file(self, workspace, capsys):
        code = main([
            "train",
            "--data", str(workspace / "nope.csv"),
            "--schema", str(workspace / "schema.json"),
            "--out", str(workspace / "m.json"),
        ])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_schema_json(self, workspace, capsys):
        (workspace / "broken.json").write_text("{nope")
        code = main([
            "train",
            "--data", str(workspace / "train.csv"),
            "--schema", str(workspace / "broken.json"),
            "--out", str(workspace / "m.json"),
        ])
        assert code == 2

    def test_lattice_arity_mismatch(self, workspace, capsys):
        assert run_train(workspace, "m.json", "--lattice", "2,2,2") == 2
        assert "--lattice" in capsys.readouterr().err

    def test_unknown_monotonic_name(self, workspace, capsys):
        assert run_train(workspace, "m.json", "--monotonic", "+nosuch") == 2

    def test_bad_regularizer_kind(self, workspace, capsys):
        assert run_train(workspace, "m.json", "--regularizer", "ripple:0.1") == 2

    def test_missing_column(self, workspace, capsys):
        write_csv(workspace / "narrow.csv", ["price", "y"], [["1.0", "0.5"]])
        code = main([
            "train",
            "--data", str(workspace / "narrow.csv"),
            "--schema", str(workspace / "schema.json"),
            "--out", str(workspace / "m.json"),
        ])
        assert code == 2

    def test_schema_without_label_needs_pairs(self, workspace, capsys):
        schema = {"features": [{"name": "price"}, {"name": "rating"}]}
        (workspace / "nolabel.json").write_text(json.dumps(schema))
        code = main([
            "train",
            "--data", str(workspace / "train.csv"),
            "--schema", str(workspace / "nolabel.json"),
            "--out", str(workspace / "m.json"),
        ])
        assert code == 2
        assert "--pairs" in capsys.readouterr().err

    def test_diverging_run_exits_three(self, workspace, capsys):
        with np.errstate(over="ignore", invalid="ignore"):
            code = run_train(workspace, "m.json", "--step-size", "1e200")
        assert code == 3
        assert "error:" in capsys.readouterr().err


class TestRanking:
    def make_suffix_pairs(self, tmp_path, n=200, seed=3):
        rng = np.random.default_rng(seed)
        a, b = rng.random(n), rng.random(n)
        hi, lo = np.maximum(a, b) + 0.05, np.minimum(a, b)
        write_csv(
            tmp_path / "pairs.csv",
            ["score+", "score-"],
            [[repr(float(h)), repr(float(l))] for h, l in zip(hi, lo)],
        )
        schema = {"features": [{"name": "score", "monotone": "increasing", "keypoints": 3}]}
        (tmp_path / "rank_schema.json").write_text(json.dumps(schema))

    def test_suffix_layout(self, tmp_path, capsys):
        self.make_suffix_pairs(tmp_path)
        code = main([
            "train",
            "--data", str(tmp_path / "pairs.csv"),
            "--schema", str(tmp_path / "rank_schema.json"),
            "--out", str(tmp_path / "m.json"),
            "--pairs",
            "--loss", "logistic",
            "--epochs", "20",
            "--step-size", "0.5",
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["train_metrics"]["pair_accuracy"] >= 0.9

    def test_two_row_layout(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        rows = []
        for pid in range(150):
            a, b = sorted(rng.random(2))
            rows.append([str(pid), repr(float(b) + 0.05), "1"])
            rows.append([str(pid), repr(float(a)), "0"])
        write_csv(tmp_path / "duels.csv", ["match", "score", "won"], rows)
        schema = {
            "label": "won",
            "features": [{"name": "score", "monotone": "increasing", "keypoints": 3}],
        }
        (tmp_path / "duel_schema.json").write_text(json.dumps(schema))
        code = main([
            "train",
            "--data", str(tmp_path / "duels.csv"),
            "--schema", str(tmp_path / "duel_schema.json"),
            "--out", str(tmp_path / "m.json"),
            "--pair-id", "match",
            "--loss", "logistic",
            "--epochs", "20",
            "--step-size", "0.5",
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["train_metrics"]["pair_accuracy"] >= 0.9


class TestMissingToken:
    def test_na_cells_with_vertex_policy(self, tmp_path, capsys):
        rng = np.random.default_rng(9)
        rows = []
        for _ in range(120):
            x = rng.random()
            if rng.random() < 0.15:
                rows.append(["NA", "0.4"])
            else:
                rows.append([repr(float(x)), repr(float(x))])
        write_csv(tmp_path / "gaps.csv", ["x", "y"], rows)
        schema = {
            "label": "y",
            "features": [
                {"name": "x", "monotone": "increasing", "missing": "vertex", "size": 3}
            ],
        }
        (tmp_path / "gap_schema.json").write_text(json.dumps(schema))
        code = main([
            "train",
            "--data", str(tmp_path / "gaps.csv"),
            "--schema", str(tmp_path / "gap_schema.json"),
            "--out", str(tmp_path / "m.json"),
            "--missing-token", "NA",
            "--epochs", "10",
        ])
        assert code == 0
        model = Model.load(tmp_path / "m.json")
        assert model.violations() == []
        assert np.isfinite(model.predict_row([float("nan")]))
