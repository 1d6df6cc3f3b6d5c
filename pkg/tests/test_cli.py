import json
import os

import pytest

from genrekit.cli import main
from genrekit.pipeline import save_manifest


def test_synth_and_factorize(tmp_path, capsys):
    ds = tmp_path / "ds"
    code = main(["synth", "--out", str(ds), "--top-genres", "2",
                 "--subs-per-genre", "2", "--albums", "12",
                 "--tracks-per-album", "1", "--seed", "3"])
    assert code == 0
    assert (ds / "manifest.jsonl").exists()
    assert (ds / "taxonomy.txt").exists()

    out = tmp_path / "factors.muf"
    code = main(["factorize", "--manifest", str(ds / "manifest.jsonl"),
                 "--taxonomy", str(ds / "taxonomy.txt"),
                 "--d", "4", "--out", str(out)])
    assert code == 0
    assert out.exists()
    from genrekit.labelspace import load_factor_model
    assert load_factor_model(out).d == 4


def test_train_and_evaluate(tmp_path, capsys):
    ds = tmp_path / "ds"
    main(["synth", "--out", str(ds), "--top-genres", "2",
          "--subs-per-genre", "2", "--albums", "15",
          "--tracks-per-album", "1", "--seed", "4"])
    capsys.readouterr()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"modality": "timbre", "settings": "timbre-mlp",
                               "epochs": 5}))
    run_dir = tmp_path / "run"
    code = main(["train", "--manifest", str(ds / "manifest.jsonl"),
                 "--taxonomy", str(ds / "taxonomy.txt"),
                 "--config", str(cfg), "--out", str(run_dir)])
    assert code == 0
    row = json.loads(capsys.readouterr().out.splitlines()[0])
    assert row["modality"] == "timbre"

    code = main(["evaluate", "--manifest", str(ds / "manifest.jsonl"),
                 "--taxonomy", str(ds / "taxonomy.txt"),
                 "--predictions", str(run_dir / "predictions.mufv")])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert "auc" in report and "coverage" in report


def test_fuse_command(tmp_path, capsys):
    import numpy as np
    from genrekit.zoo import load_feature_vectors, save_feature_vectors
    rng = np.random.default_rng(5)
    a, t = tmp_path / "a.mufv", tmp_path / "t.mufv"
    ids = ["x1", "x2"]
    save_feature_vectors(rng.normal(size=(2, 3)), ids, a)
    save_feature_vectors(rng.normal(size=(2, 4)), ids, t)
    out = tmp_path / "fused.mufv"
    code = main(["fuse", f"A={a}", f"T={t}", "--out", str(out)])
    assert code == 0
    mat, got_ids = load_feature_vectors(out)
    assert mat.shape == (2, 7)
    assert got_ids == ids


def test_infogain_command(tmp_path, capsys):
    ds = tmp_path / "ds"
    main(["synth", "--out", str(ds), "--top-genres", "2",
          "--subs-per-genre", "2", "--albums", "12",
          "--tracks-per-album", "1", "--seed", "6"])
    capsys.readouterr()
    code = main(["infogain", "--manifest", str(ds / "manifest.jsonl"),
                 "--taxonomy", str(ds / "taxonomy.txt"),
                 "--label", "genre00", "--top", "5"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert 1 <= len(lines) <= 5
    gain, term = lines[0].split("\t")
    assert float(gain) >= 0.0
    # the strongest term should be one of the planted keywords
    assert "genre00" in term


def test_report_command(tmp_path, capsys):
    rows_path = tmp_path / "rows.jsonl"
    rows_path.write_text(json.dumps({
        "modality": "text", "target": "logistic", "settings": "vsm",
        "params": 1000, "epoch_seconds": 0.1, "auc": 0.9,
        "c@1": 0.2, "c@3": 0.4, "c@5": 0.6}) + "\n")
    code = main(["report", "--rows", str(rows_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("Modality")


def test_exit_code_config_error(tmp_path, capsys):
    code = main(["train"])  # missing manifest/taxonomy
    assert code == 2


def test_exit_code_data_error(tmp_path, capsys):
    bad = tmp_path / "m.jsonl"
    bad.write_text("{broken\n")
    tax = tmp_path / "t.txt"
    tax.write_text("genre00\n")
    code = main(["train", "--manifest", str(bad), "--taxonomy", str(tax)])
    assert code == 3
