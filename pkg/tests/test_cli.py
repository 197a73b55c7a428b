import csv
import json

import numpy as np
import pytest

from spectraclass.cli import build_config, main, make_parser
from spectraclass.spectra import REGIONS, SpectraSet, reference_axis, save_spectra
from spectraclass.synth import PRESET_NAMES


def synth(tmp_path, preset, n, seed=0):
    out = tmp_path / f"{preset}_{n}_{seed}"
    assert main(["synth", "--preset", preset, "--n", str(n), "--seed", str(seed), "--out", str(out)]) == 0
    a, b = PRESET_NAMES[preset]
    return out / f"{a}.csv", out / f"{b}.csv"


def read_summary(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestSynth:
    def test_row_counts(self, tmp_path):
        a, b = synth(tmp_path, "null", 2000)
        for f in (a, b):
            with open(f) as fh:
                assert sum(1 for _ in fh) == 2001
        manifest = json.loads((a.parent / "manifest.json").read_text())
        assert manifest["status"] == "ok" and manifest["n_per_class"] == 2000

    def test_seeded(self, tmp_path):
        a1, _ = synth(tmp_path, "colon_like", 5, seed=3)
        a2, _ = synth(tmp_path / "again", "colon_like", 5, seed=3)
        assert a1.read_bytes() == a2.read_bytes()


class TestErrors:
    def test_missing_input_no_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["evaluate", "--input-a", str(tmp_path / "nope.csv"),
                     "--input-b", str(tmp_path / "nope2.csv"), "--out", str(out)])
        assert code != 0
        assert "no such file" in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_method(self, tmp_path, capsys):
        a, b = synth(tmp_path, "null", 5)
        code = main(["evaluate", "--input-a", str(a), "--input-b", str(b), "--methods", "svm",
                     "--out", str(tmp_path / "o")])
        assert code == 1 and "unknown method" in capsys.readouterr().err

    def test_explain_needs_lrp_or_cnn(self, tmp_path):
        a, b = synth(tmp_path, "null", 5)
        assert main(["explain", "--input-a", str(a), "--input-b", str(b), "--methods", "lra",
                     "--out", str(tmp_path / "o")]) == 1

    def test_failed_run_is_flagged(self, tmp_path):
        # 4 spectra per class cannot fill 10 folds with both classes
        a, b = synth(tmp_path, "null", 4)
        out = tmp_path / "o"
        assert main(["evaluate", "--input-a", str(a), "--input-b", str(b), "--methods", "lra",
                     "--skip-preprocess", "--out", str(out)]) == 1
        assert json.loads((out / "manifest.json").read_text())["status"] == "failed"


def test_preprocess_rejects_planted_spike(tmp_path, capsys):
    w = reference_axis()
    rng = np.random.default_rng(0)
    # uniform noise stays within sqrt(3) standard deviations, so only the spike can be rejected
    for name, label in (("a", 1), ("b", 0)):
        X = 10 + rng.uniform(-1, 1, size=(50, w.values.size))
        if label == 1:
            X[17, 800] = X[:, 800].mean() + 10 * X[:, 800].std(ddof=1)
        save_spectra(tmp_path / f"{name}.csv", SpectraSet(w, X, np.full(50, label)))
    code = main(["preprocess", "--input-a", str(tmp_path / "a.csv"), "--input-b", str(tmp_path / "b.csv"),
                 "--out", str(tmp_path / "p")])
    assert code == 0
    assert "rejected 1 of 100 spectra" in capsys.readouterr().out
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["rejected"] == [17]
    with open(tmp_path / "p" / "a.csv") as fh:
        assert sum(1 for _ in fh) == 50


def test_synth_preprocess_evaluate_round_trip(tmp_path):
    a, b = synth(tmp_path, "colon_like", 30)
    pre = tmp_path / "pre"
    assert main(["preprocess", "--input-a", str(a), "--input-b", str(b), "--out", str(pre)]) == 0
    out = tmp_path / "ev"
    code = main(["evaluate", "--input-a", str(pre / a.name), "--input-b", str(pre / b.name),
                 "--skip-preprocess", "--methods", "lra,pca", "--folds", "5", "--out", str(out)])
    assert code == 0
    header, rows = read_summary(out / "summary.csv")
    assert header == ["comparison", "LRA", "PCA"]
    assert [r[0] for r in rows] == ["colon_hi_methyl vs. colon_lo_methyl LW",
                                    "colon_hi_methyl vs. colon_lo_methyl HW"]
    for m in ("lra", "pca"):
        for r in ("LW", "HW"):
            assert (out / f"report_{m}_{r}.json").exists() and (out / f"roc_{m}_{r}.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["artifacts"]) >= {"summary.csv", "report_lra_LW.json"}
    assert manifest["config"]["seed"] == 0 and manifest["versions"]["numpy"] == np.__version__


def test_colon_like_hw_separable(tmp_path):
    a, b = synth(tmp_path, "colon_like", 100)
    out = tmp_path / "ev"
    assert main(["evaluate", "--input-a", str(a), "--input-b", str(b), "--region", "HW",
                 "--methods", "lra,l2d,lrp,pca", "--out", str(out)]) == 0
    _, rows = read_summary(out / "summary.csv")
    assert all(float(v) >= 0.9 for v in rows[0][1:])


def test_null_within_three_sem(tmp_path):
    a, b = synth(tmp_path, "null", 100)
    out = tmp_path / "ev"
    assert main(["evaluate", "--input-a", str(a), "--input-b", str(b),
                 "--methods", "lra,l2d,lrp,pca", "--out", str(out)]) == 0
    for m in ("lra", "l2d", "lrp", "pca"):
        for r in ("LW", "HW"):
            rep = json.loads((out / f"report_{m}_{r}.json").read_text())
            assert abs(rep["mean_auc"] - 0.5) <= 3 * rep["sem"], (m, r, rep["mean_auc"], rep["sem"])


def test_config_file_flags_win(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("folds = 4\nseed = 9\nmethods = lra,l2d\nskip-preprocess = true\n")
    args = make_parser().parse_args(["evaluate", "--config", str(cfg_file), "--seed", "2"])
    cfg = build_config(args)
    assert (cfg.folds, cfg.seed, cfg.methods, cfg.skip_preprocess) == (4, 2, ["lra", "l2d"], True)
    cfg_file.write_text("colour = red\n")
    with pytest.raises(ValueError, match="colour"):
        build_config(make_parser().parse_args(["evaluate", "--config", str(cfg_file)]))


class TestExplain:
    def test_colon_like_importance_localised(self, tmp_path):
        a, b = synth(tmp_path, "colon_like", 100)
        out = tmp_path / "x"
        assert main(["explain", "--input-a", str(a), "--input-b", str(b), "--region", "HW",
                     "--methods", "lrp", "--out", str(out), "--gnuplot"]) == 0
        with open(out / "importance_HW.csv") as fh:
            rows = list(csv.DictReader(fh))
        top = max(rows, key=lambda r: float(r["importance"]))
        assert top["feature"] == "2700-3200"
        assert (out / "importance_HW.gp").exists()

    def test_null_importance_not_significant(self, tmp_path):
        a, b = synth(tmp_path, "null", 200)
        out = tmp_path / "x"
        assert main(["explain", "--input-a", str(a), "--input-b", str(b), "--methods", "lrp",
                     "--out", str(out)]) == 0
        for r in ("LW", "HW"):
            rep = json.loads((out / f"importance_{r}.json").read_text())
            imp, hw = np.array(rep["importance"]), np.array(rep["half_width"])
            assert np.all(imp <= 3 * hw), (r, imp, hw)

    def test_saliency_rows_equal_region_length(self, tmp_path):
        a, b = synth(tmp_path, "colon_like", 20)
        out = tmp_path / "x"
        assert main(["explain", "--input-a", str(a), "--input-b", str(b), "--methods", "cnn",
                     "--epochs", "2", "--out", str(out)]) == 0
        w = reference_axis().values
        for r in ("LW", "HW"):
            with open(out / f"saliency_{r}.csv") as fh:
                assert sum(1 for _ in fh) - 1 == REGIONS[r].mask(w).sum()
            assert (out / f"trace_cnn_{r}.csv").exists() and (out / f"model_cnn_{r}.json").exists()
