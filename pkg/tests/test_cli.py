import json

import numpy as np
import pytest

from cmsre import NumericalError
from cmsre.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--n", "120", "--classes", "3",
                 "--noise", "0.005", "--seed", "3"]) == 0
    return out


def manifest_of(synth_dir):
    return str(synth_dir / "manifest.json")


class TestValidate:
    def test_valid_manifest(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        np.savetxt(tmp_path / "a.csv", rng.normal(size=(5, 100)), delimiter=",")
        np.savetxt(tmp_path / "b.csv", rng.normal(size=(8, 100)), delimiter=",")
        (tmp_path / "manifest.json").write_text(json.dumps({
            "views": [{"name": "a", "path": "a.csv"}, {"name": "b", "path": "b.csv"}],
            "labels": None,
        }))
        assert main(["validate", "--manifest", str(tmp_path / "manifest.json")]) == 0
        assert capsys.readouterr().out.strip() == "views=2 samples=100 dims=[5,8]"

    def test_sample_count_mismatch_exits_2(self, tmp_path, capsys):
        np.savetxt(tmp_path / "a.csv", np.ones((2, 10)), delimiter=",")
        np.savetxt(tmp_path / "b.csv", np.ones((2, 9)), delimiter=",")
        (tmp_path / "manifest.json").write_text(json.dumps({
            "views": [{"name": "a", "path": "a.csv"}, {"name": "b", "path": "b.csv"}],
        }))
        assert main(["validate", "--manifest", str(tmp_path / "manifest.json")]) == 2
        assert "sample count mismatch" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        (tmp_path / "manifest.json").write_text(json.dumps({
            "views": [{"name": "a", "path": "gone.csv"}],
        }))
        assert main(["validate", "--manifest", str(tmp_path / "manifest.json")]) == 2
        assert "gone.csv" in capsys.readouterr().err


class TestEmbed:
    def test_writes_embeddings_trace_metadata(self, synth_dir, tmp_path):
        out = tmp_path / "embed"
        code = main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "2", "--seed", "0"])
        assert code == 0
        for name in ("view1_embedding.csv", "view2_embedding.csv"):
            matrix = np.loadtxt(out / name, delimiter=",")
            assert matrix.shape == (2, 120)
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,objective,delta,reconstruction_view1,reconstruction_view2"
        final_delta = float(trace[-1].split(",")[2])
        assert final_delta < 1e-6
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["termination"] == "converged"
        assert metadata["d"] == 2
        assert metadata["notes"] == []

    def test_lambda_zero_notes_decoupled_mode(self, synth_dir, tmp_path):
        out = tmp_path / "embed0"
        assert main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "2", "--lambda", "0"]) == 0
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["notes"] == ["decoupled (single-view) mode"]

    def test_d_out_of_range_exits_2(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "embed_bad"
        assert main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "119"]) == 2
        assert "d out of range" in capsys.readouterr().err

    def test_numerical_failure_exits_3(self, synth_dir, tmp_path, monkeypatch, capsys):
        import cmsre.cli as cli_module

        def explode(*args, **kwargs):
            raise NumericalError("synthetic failure")

        monkeypatch.setattr(cli_module, "fit_cmsre", explode)
        out = tmp_path / "embed_num"
        assert main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "2"]) == 3
        assert "synthetic failure" in capsys.readouterr().err


class TestClassify:
    def test_report_files(self, synth_dir, tmp_path):
        out = tmp_path / "cls"
        code = main(["classify", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "4", "--trials", "3", "--test-count", "40", "--seed", "1"])
        assert code == 0
        payload = json.loads((out / "classification.json").read_text())
        assert payload["trials"] == 3
        assert len(payload["per_trial_accuracy"]) == 3
        assert 0.0 <= payload["mean_accuracy"] <= payload["max_accuracy"] <= 1.0
        lines = (out / "classification.csv").read_text().splitlines()
        assert lines[0] == "trial,accuracy"
        assert len(lines) == 4

    def test_unlabeled_exits_2(self, tmp_path, capsys):
        np.savetxt(tmp_path / "a.csv", np.random.default_rng(0).normal(size=(4, 30)),
                   delimiter=",")
        (tmp_path / "manifest.json").write_text(json.dumps({
            "views": [{"name": "a", "path": "a.csv"}], "labels": None,
        }))
        out = tmp_path / "out"
        assert main(["classify", "--manifest", str(tmp_path / "manifest.json"),
                     "--out", str(out), "--d", "2"]) == 2
        assert "labels" in capsys.readouterr().err


class TestRetrieve:
    def test_queries_per_class(self, synth_dir, tmp_path):
        out = tmp_path / "ret"
        code = main(["retrieve", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "4", "--queries-per-class", "3", "--seed", "2"])
        assert code == 0
        payload = json.loads((out / "retrieval.json").read_text())
        for key in ("precision", "recall", "map", "f1"):
            assert 0.0 <= payload[key] <= 1.0
        assert payload["queries_evaluated"] == 9
        assert payload["cutoff_policy"] == "per-query relevant-set size"

    def test_query_file_with_cutoff(self, synth_dir, tmp_path):
        queries = tmp_path / "queries.txt"
        queries.write_text("0\n5\n50\n")
        out = tmp_path / "ret2"
        assert main(["retrieve", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "4", "--queries", str(queries), "--cutoff", "7"]) == 0
        payload = json.loads((out / "retrieval.json").read_text())
        assert payload["cutoff"] == 7

    def test_explicit_relevance_json(self, synth_dir, tmp_path):
        spec = tmp_path / "queries.json"
        spec.write_text(json.dumps({"queries": [0, 1], "relevant": {"0": [1, 2], "1": [0]}}))
        out = tmp_path / "ret3"
        assert main(["retrieve", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--d", "4", "--queries", str(spec)]) == 0

    def test_missing_spec_exits_2(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "ret4"
        assert main(["retrieve", "--manifest", manifest_of(synth_dir),
                     "--out", str(out), "--d", "4"]) == 2
        assert "query/relevance spec missing" in capsys.readouterr().err


class TestSweepLambda:
    def test_table_structure(self, synth_dir, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep-lambda", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--lambdas", "0,0.8", "--d", "4", "--trials", "2",
                     "--test-count", "40", "--seed", "0"])
        assert code == 0
        lines = (out / "lambda_sweep.csv").read_text().splitlines()
        assert lines[0] == "lambda,mean_accuracy,max_accuracy,trials"
        assert len(lines) == 3
        assert lines[1].startswith("0,")
        assert lines[2].startswith("0.8", 0) or lines[2].startswith("0.80000")

    def test_duplicate_lambda_rows_identical(self, synth_dir, tmp_path):
        out = tmp_path / "sweep2"
        assert main(["sweep-lambda", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--lambdas", "0.5,0.5", "--d", "4", "--trials", "2",
                     "--test-count", "40", "--seed", "0"]) == 0
        lines = (out / "lambda_sweep.csv").read_text().splitlines()
        assert lines[1].split(",")[1:] == lines[2].split(",")[1:]


class TestSynthCommand:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--out", str(out), "--n", "40", "--classes", "2",
                         "--noise", "0.1", "--seed", "9"]) == 0
        for name in ("view1.csv", "view2.csv", "labels.txt", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_noiseless_per_view_accuracy_is_one(self, tmp_path):
        out = tmp_path / "clean"
        assert main(["synth", "--out", str(out), "--n", "150", "--classes", "3",
                     "--noise", "0", "--seed", "11"]) == 0
        from cmsre import (
            CmsreConfig,
            MultiViewDataset,
            build_neighbor_index,
            fit_cmsre,
            knn_classify_1nn,
            load_dataset,
            make_split_plan,
            normalize_view,
            solve_view_codes,
        )

        dataset = load_dataset(out / "manifest.json")
        dataset = MultiViewDataset(
            views=tuple(normalize_view(v, "zscore") for v in dataset.views),
            labels=dataset.labels,
        )
        codes = [solve_view_codes(v, build_neighbor_index(v, 10)) for v in dataset.views]
        embeddings, _ = fit_cmsre(dataset, codes, CmsreConfig(d=4, lam=0.0))
        split = make_split_plan(150, 50, 5, seed=0)
        for embedding in embeddings:
            for test_indices in split.test_indices:
                assert knn_classify_1nn(embedding, dataset.labels, test_indices) == 1.0

    def test_invalid_spec_exits_2(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--n", "10",
                     "--classes", "3"]) == 2
        assert "classes" in capsys.readouterr().err


class TestConfigPrecedence:
    def test_flag_overrides_config_file(self, synth_dir, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"d": 3, "k": 7, "lambda": 0.2}))
        out = tmp_path / "prec"
        assert main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                     "--config", str(config), "--d", "2"]) == 0
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["d"] == 2  # flag wins
        assert metadata["k"] == 7  # config wins over default
        assert metadata["lambda"] == 0.2

    def test_unknown_config_key_exits_2(self, synth_dir, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus": 1}))
        assert main(["embed", "--manifest", manifest_of(synth_dir),
                     "--out", str(tmp_path / "o"), "--config", str(config)]) == 2
        assert "bogus" in capsys.readouterr().err


class TestDeterminism:
    def test_embed_runs_bit_identical(self, synth_dir, tmp_path):
        outs = [tmp_path / "r1", tmp_path / "r2"]
        for out in outs:
            assert main(["embed", "--manifest", manifest_of(synth_dir), "--out", str(out),
                         "--d", "3", "--seed", "4"]) == 0
        for name in ("view1_embedding.csv", "view2_embedding.csv", "trace.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_classify_runs_bit_identical(self, synth_dir, tmp_path):
        outs = [tmp_path / "c1", tmp_path / "c2"]
        for out in outs:
            assert main(["classify", "--manifest", manifest_of(synth_dir), "--out", str(out),
                         "--d", "3", "--trials", "3", "--test-count", "40",
                         "--seed", "4"]) == 0
        assert (outs[0] / "classification.csv").read_bytes() == (outs[1] / "classification.csv").read_bytes()
