"""End-to-end command tests driven through main(argv)."""

import hashlib
import json

import numpy as np
import pytest

from droidlens.cli import RunConfig, load_config, main
from droidlens.dataset import BlobSpec, read_dataset, synth_blobs, write_dataset
from droidlens.errors import ConfigError
from droidlens.evaluate import report_csv, run_plain_pipeline
from droidlens.learn import ClassifierSpec
from dexfactory import (
    FIXTURE_MULTI_CLASSES,
    build_dex,
    fixture_multi,
    fixture_payload,
    fixture_plain,
    histogram_tuple,
)


def make_labeled_csv(path, per=18, sigma=1.0, seed=0):
    """Wire-format dataset: 256 columns, two blobs split on two dims."""
    c0 = np.zeros(256)
    c1 = np.zeros(256)
    c0[[14, 18]] = (40.0, 10.0)
    c1[[14, 18]] = (10.0, 40.0)
    spec = BlobSpec(
        centers=(tuple(c0), tuple(c1)),
        per_center_count=per,
        noise_sigma=sigma,
        labels=(0, 1),
    )
    ds = synth_blobs(spec, seed)
    write_dataset(ds, path)
    return ds


@pytest.fixture
def labeled_csv(tmp_path):
    path = tmp_path / "labeled.csv"
    make_labeled_csv(path)
    return path


# --- extract -------------------------------------------------------------------


def test_extract_fixture_corpus(tmp_path, capsys):
    corpus = tmp_path / "dex"
    corpus.mkdir()
    (corpus / "a.dex").write_bytes(fixture_plain())
    (corpus / "b.dex").write_bytes(fixture_payload())
    app = corpus / "multidex-app"
    app.mkdir()
    (app / "classes.dex").write_bytes(fixture_plain())
    (app / "classes2.dex").write_bytes(fixture_multi())
    out = tmp_path / "features.csv"

    assert main(["extract", str(corpus), "-o", str(out)]) == 0
    assert "3 rows" in capsys.readouterr().out
    ds = read_dataset(out)
    assert ds.n == 3
    assert all(len(i) == 64 for i in ds.ids)
    assert ds.ids[0] == hashlib.sha256(fixture_plain()).hexdigest()
    assert np.array_equal(ds.labels, np.zeros(3))

    plain_counts = np.array(histogram_tuple({0x12: 1, 0x13: 1, 0x00: 1, 0x0E: 1}), dtype=float)
    assert np.array_equal(ds.features[0], plain_counts)
    # Multidex rows sum their members' histograms.
    multi_counts = np.array(
        histogram_tuple({0x18: 1, 0xFA: 1, 0x90: 1, 0xB0: 1, 0x0E: 3}), dtype=float
    )
    assert np.array_equal(ds.features[2], plain_counts + multi_counts)


def test_extract_bad_dex_exits_1_and_leaves_no_output(tmp_path, capsys):
    corpus = tmp_path / "dex"
    corpus.mkdir()
    (corpus / "fine.dex").write_bytes(fixture_plain())
    (corpus / "broken.dex").write_bytes(b"not a dex at all")
    out = tmp_path / "features.csv"
    assert main(["extract", str(corpus), "-o", str(out)]) == 1
    assert "broken.dex" in capsys.readouterr().err
    assert not out.exists()
    assert not list(tmp_path.glob("features.csv.*"))  # no temp litter


def test_extract_empty_dir_exits_1(tmp_path, capsys):
    corpus = tmp_path / "empty"
    corpus.mkdir()
    assert main(["extract", str(corpus), "-o", str(tmp_path / "f.csv")]) == 1
    assert "no .dex" in capsys.readouterr().err


# --- label ----------------------------------------------------------------------


def test_label_from_fixture_dir(tmp_path, capsys):
    corpus = tmp_path / "dex"
    corpus.mkdir()
    (corpus / "a.dex").write_bytes(fixture_plain())
    (corpus / "b.dex").write_bytes(fixture_payload())
    features = tmp_path / "features.csv"
    assert main(["extract", str(corpus), "-o", str(features)]) == 0

    reports = tmp_path / "reports"
    reports.mkdir()
    ids = read_dataset(features).ids
    for file_hash, detections in ((ids[0], 3), (ids[1], 0)):
        engines = {f"engine{j}": {"detected": j < detections} for j in range(5)}
        (reports / f"{file_hash}.json").write_text(json.dumps({"engines": engines}))

    out = tmp_path / "labeled.csv"
    assert main(["label", str(features), "--oracle", str(reports), "-o", str(out)]) == 0
    assert "1 malware, 1 benign" in capsys.readouterr().out
    assert read_dataset(out).labels.tolist() == [1, 0]

    strict = tmp_path / "strict.csv"
    assert (
        main(
            [
                "label", str(features), "--oracle", str(reports),
                "--threshold", "4", "-o", str(strict),
            ]
        )
        == 0
    )
    assert read_dataset(strict).labels.tolist() == [0, 0]


def test_label_missing_report_exits_1(tmp_path, capsys):
    from droidlens.dataset import Dataset

    features = tmp_path / "features.csv"
    ds = Dataset(
        ids=("ab" * 32,),
        features=np.zeros((1, 256)),
        labels=np.zeros(1, dtype=np.int64),
    )
    write_dataset(ds, features)
    reports = tmp_path / "reports"
    reports.mkdir()
    out = tmp_path / "labeled.csv"
    assert main(["label", str(features), "--oracle", str(reports), "-o", str(out)]) == 1
    assert "no recorded report" in capsys.readouterr().err
    assert not out.exists()


# --- cluster-compare and elbow ----------------------------------------------------


def test_cluster_compare_output(labeled_csv, tmp_path, capsys):
    out = tmp_path / "table.csv"
    assert main(["cluster-compare", str(labeled_csv), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == (
        "Algorithm,Parameter,No of Clusters,Calinski Harabaz Score,"
        "Silhouette Score,Winner"
    )
    assert len(lines) == 21
    assert sum(1 for ln in lines if ln.endswith(",*")) == 1
    assert "k-means Clustering" in capsys.readouterr().out


def test_elbow_curve(labeled_csv, tmp_path):
    out = tmp_path / "elbow.csv"
    assert main(["elbow", str(labeled_csv), "--k", "1..6", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k,SSE"
    ks = [int(ln.split(",")[0]) for ln in lines[1:]]
    sses = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert ks == [1, 2, 3, 4, 5, 6]
    assert all(a >= b - 1e-9 for a, b in zip(sses, sses[1:]))


def test_elbow_bad_range_exits_2(labeled_csv, tmp_path, capsys):
    code = main(["elbow", str(labeled_csv), "--k", "potato", "-o", str(tmp_path / "e.csv")])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_elbow_comma_list(labeled_csv, tmp_path):
    out = tmp_path / "elbow.csv"
    assert main(["elbow", str(labeled_csv), "--k", "2,4", "-o", str(out)]) == 0
    ks = [ln.split(",")[0] for ln in out.read_text().splitlines()[1:]]
    assert ks == ["2", "4"]


# --- eval and compare ---------------------------------------------------------------


def test_eval_plain_matches_library_run(labeled_csv, tmp_path):
    out = tmp_path / "report.csv"
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps(
            {
                "seed": 7,
                "cv_k": 3,
                "classifiers": [{"kind": "decision_tree"}],
            }
        )
    )
    assert main(["eval", "plain", str(labeled_csv), "--config", str(config), "-o", str(out)]) == 0
    ds = read_dataset(labeled_csv)
    want = report_csv(
        run_plain_pipeline(ds, [ClassifierSpec(kind="decision_tree")], k=3, seed=7)
    )
    assert out.read_text() == want
    assert "Decision Trees" in want


def test_eval_reduction_identity_via_cli(labeled_csv, tmp_path):
    plain_out = tmp_path / "plain.csv"
    reduced_out = tmp_path / "reduced.csv"
    common = ["--cv-k", "3", "--seed", "42"]
    assert main(["eval", "plain", str(labeled_csv), *common, "-o", str(plain_out)]) == 0
    assert (
        main(
            [
                "eval", "clustered", str(labeled_csv), *common,
                "--cluster-k", "1", "--no-smote", "-o", str(reduced_out),
            ]
        )
        == 0
    )
    assert plain_out.read_bytes() == reduced_out.read_bytes()


def test_eval_flags_override_config(labeled_csv, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 7, "cv_k": 3, "classifiers": [{"kind": "gaussian_nb"}]}))
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    assert main(
        ["eval", "plain", str(labeled_csv), "--config", str(config), "--seed", "11", "-o", str(out_a)]
    ) == 0
    ds = read_dataset(labeled_csv)
    want = report_csv(run_plain_pipeline(ds, [ClassifierSpec(kind="gaussian_nb")], k=3, seed=11))
    assert out_a.read_text() == want
    # Same command again: byte-identical.
    assert main(
        ["eval", "plain", str(labeled_csv), "--config", str(config), "--seed", "11", "-o", str(out_b)]
    ) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_eval_paper_protocol_runs(labeled_csv, tmp_path):
    out = tmp_path / "paper.csv"
    assert (
        main(
            [
                "eval", "clustered", str(labeled_csv), "--cv-k", "3",
                "--protocol", "paper", "--cluster-k", "2", "-o", str(out),
                "--config", str(_dt_only_config(tmp_path)),
            ]
        )
        == 0
    )
    assert out.read_text().startswith("Classifier,")


def _dt_only_config(tmp_path):
    path = tmp_path / "dt.json"
    path.write_text(json.dumps({"classifiers": [{"kind": "decision_tree"}]}))
    return path


def test_eval_missing_input_exits_1(tmp_path, capsys):
    code = main(["eval", "plain", "missing.csv", "-o", str(tmp_path / "r.csv")])
    assert code == 1
    assert "missing.csv" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    assert main(["eval", "plain", "x.csv", "--no-such-flag"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_1(labeled_csv, tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 1, "mystery": True}))
    code = main(
        ["eval", "plain", str(labeled_csv), "--config", str(config), "-o", str(tmp_path / "r.csv")]
    )
    assert code == 1
    assert "mystery" in capsys.readouterr().err


def test_compare_summary(labeled_csv, tmp_path):
    out = tmp_path / "summary.md"
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"cv_k": 3, "seed": 5}))
    assert main(["compare", str(labeled_csv), "--config", str(config), "-o", str(out)]) == 0
    table = [ln for ln in out.read_text().splitlines() if ln.startswith("|")]
    assert len(table) == 7
    for name in (
        "Logistic Regression",
        "Naive Bayes",
        "Support Vector Machines",
        "Decision Trees",
        "Random Forest",
    ):
        assert any(ln.startswith(f"| {name} |") for ln in table)


# --- config object ------------------------------------------------------------------


def test_config_validation_direct(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        RunConfig(seed=-1)
    with pytest.raises(ConfigError, match="cv_k"):
        RunConfig(cv_k=1)
    with pytest.raises(ConfigError, match="protocol"):
        RunConfig(protocol="fast")
    with pytest.raises(ConfigError, match="smote"):
        RunConfig(smote="yes")
    cfg = RunConfig()
    assert cfg.seed == 42
    assert [s.kind for s in cfg.resolved_specs()] == [
        "logistic_regression", "gaussian_nb", "linear_svm", "decision_tree", "random_forest",
    ]

    path = tmp_path / "c.json"
    path.write_text(json.dumps({"classifiers": [{"kind": "decision_tree", "seed": 1}]}))
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(path)
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path)
    path.write_text(json.dumps({"classifiers": []}))
    with pytest.raises(ConfigError, match="non-empty"):
        load_config(path)


def test_multidex_constant_under_file_ordering(tmp_path):
    # The unit hash folds files in sorted name order, so renaming
    # changes the id but identical bytes in the same order do not.
    corpus_a = tmp_path / "a"
    corpus_b = tmp_path / "b"
    for corpus in (corpus_a, corpus_b):
        app = corpus / "app"
        app.mkdir(parents=True)
        (app / "classes.dex").write_bytes(fixture_plain())
        (app / "classes2.dex").write_bytes(fixture_payload())
    out_a = tmp_path / "fa.csv"
    out_b = tmp_path / "fb.csv"
    assert main(["extract", str(corpus_a), "-o", str(out_a)]) == 0
    assert main(["extract", str(corpus_b), "-o", str(out_b)]) == 0
    assert read_dataset(out_a).ids == read_dataset(out_b).ids
