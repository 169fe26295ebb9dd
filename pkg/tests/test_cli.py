import csv
import json

import pytest

from sparseunmix.cli import main
from sparseunmix.speclib import BUNDLED_OVERSIZED_LIBRARY, bundled_library_path, load_roi, load_truth
from sparseunmix.techniques import TECHNIQUES


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--pixels", "6", "--complexity", "2-3", "--seed", "3", "--out", str(out)]) == 0
    return out


class TestSimulate:
    def test_defaults(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == 0
        roi = load_roi(tmp_path / "roi.csv")
        assert len(roi) == 120
        assert roi.target_names == ("alunite",)
        assert all(len(t.constituents) == 2 for t in load_truth(tmp_path / "truth.csv"))

    def test_complexity_three(self, tmp_path):
        assert main(["simulate", "--pixels", "10", "--complexity", "3", "--out", str(tmp_path)]) == 0
        assert all(len(t.constituents) == 3 for t in load_truth(tmp_path / "truth.csv"))

    def test_rerun_is_identical(self, tmp_path):
        argv = ["simulate", "--pixels", "8", "--seed", "11", "--snr", "30"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        for name in ("roi.csv", "roi.json", "truth.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_noiseless(self, tmp_path):
        assert main(["simulate", "--pixels", "2", "--snr", "inf", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["resolved"]["snr"] == float("inf")

    @pytest.mark.parametrize("extra", [["--complexity", "0"], ["--complexity", "x"], ["--pixels", "-3"],
                                       ["--mixing-kind", "hapke"], ["--target", "unobtainium"]])
    def test_invalid_values_exit_2(self, tmp_path, extra, capsys):
        assert main(["simulate", "--out", str(tmp_path)] + extra) == 2
        assert "error" in capsys.readouterr().err


class TestUnmix:
    def test_lasso_one_row_per_pixel(self, sim, tmp_path):
        out = tmp_path / "u"
        assert main(["unmix", "--roi", str(sim / "roi.csv"), "--technique", "lasso", "--out", str(out), "--svg"]) == 0
        got = rows(out / "results.csv")
        assert [r["pixel_id"] for r in got] == [p.id for p in load_roi(sim / "roi.csv")]
        assert len(list((out / "plots").glob("*.svg"))) == 6
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "unmix" and manifest["resolved"]["technique"] == "lasso"

    def test_unknown_technique(self, sim, tmp_path, capsys):
        assert main(["unmix", "--roi", str(sim / "roi.csv"), "--technique", "ridge", "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert all(t in err for t in TECHNIQUES)

    def test_missing_technique(self, sim, tmp_path):
        assert main(["unmix", "--roi", str(sim / "roi.csv"), "--out", str(tmp_path)]) == 2

    def test_ols_on_oversized_library_fails(self, sim, tmp_path, capsys):
        lib = str(bundled_library_path(BUNDLED_OVERSIZED_LIBRARY))
        argv = ["unmix", "--library", lib, "--roi", str(sim / "roi.csv"), "--technique", "ols", "--out", str(tmp_path)]
        assert main(argv) == 1
        err = capsys.readouterr().err
        assert "ill-posed" in err and "negative abundances" in err

    def test_missing_roi_file(self, tmp_path):
        assert main(["unmix", "--roi", str(tmp_path / "nope.csv"), "--technique", "lasso",
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_required_flag(self, capsys):
        assert main(["unmix", "--technique", "lasso"]) == 2

    def test_config_precedence(self, sim, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"technique": "elasticnet", "params": {"lasso": {"alpha": 0.01}}}))
        base = ["unmix", "--roi", str(sim / "roi.csv"), "--config", str(cfg)]
        assert main(base + ["--out", str(tmp_path / "a")]) == 0
        resolved = json.loads((tmp_path / "a" / "manifest.json").read_text())["resolved"]
        assert resolved["technique"] == "elasticnet"
        assert main(base + ["--technique", "lasso", "--out", str(tmp_path / "b")]) == 0
        resolved = json.loads((tmp_path / "b" / "manifest.json").read_text())["resolved"]
        assert resolved["technique"] == "lasso" and resolved["config"]["alpha"] == 0.01

    def test_unknown_config_key(self, sim, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"technique": "lasso", "colour": "blue"}))
        assert main(["unmix", "--roi", str(sim / "roi.csv"), "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_inputs_untouched(self, sim, tmp_path):
        before = (sim / "roi.csv").read_bytes()
        main(["unmix", "--roi", str(sim / "roi.csv"), "--technique", "nnls", "--out", str(tmp_path)])
        assert (sim / "roi.csv").read_bytes() == before


class TestBenchmark:
    def bench(self, sim, out, *extra):
        return main(["benchmark", "--roi", str(sim / "roi.csv"), "--truth", str(sim / "truth.csv"),
                     "--out", str(out), *extra])

    def test_subset_of_techniques(self, sim, tmp_path):
        assert self.bench(sim, tmp_path, "--techniques", "lasso,bma-nnls") == 0
        assert [r["technique"] for r in rows(tmp_path / "report.csv")] == ["lasso", "bma-nnls"]
        assert len(rows(tmp_path / "results.csv")) == 12
        assert len(rows(tmp_path / "timings.csv")) == 2
        for name in ("report.md", "taxonomy_lasso.csv", "taxonomy_bma-nnls.csv", "manifest.json"):
            assert (tmp_path / name).exists()

    def test_report_is_byte_identical(self, sim, tmp_path):
        assert self.bench(sim, tmp_path / "a", "--techniques", "elasticnet,bmaq-nnls") == 0
        assert self.bench(sim, tmp_path / "b", "--techniques", "elasticnet,bmaq-nnls") == 0
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    def test_baseline_rejected(self, sim, tmp_path):
        assert self.bench(sim, tmp_path, "--techniques", "ols") == 2

    def test_no_targets(self, sim, tmp_path):
        bare = tmp_path / "bare.csv"
        bare.write_bytes((sim / "roi.csv").read_bytes())
        assert main(["benchmark", "--roi", str(bare), "--techniques", "lasso", "--out", str(tmp_path / "o")]) == 2

    def test_explicit_target(self, sim, tmp_path):
        assert self.bench(sim, tmp_path, "--techniques", "lasso", "--target", "kaolinite") == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["resolved"]["target"] == ["kaolinite"]
