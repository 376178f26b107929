import json
import math
from pathlib import Path

import numpy as np
import pytest

from priormc.bench import cli
from priormc.bench.datasets import (
    DatasetError,
    DatasetSpec,
    RealDataConfig,
    builtin_table,
    load_dataset,
    run_real_dataset,
    write_table,
)
from priormc.bench.experiments import ExperimentConfig, gen_instance, run_phase_transition, trial_seeds
from priormc.bench.report import (
    CSV_COLUMNS,
    ExperimentReport,
    ReportIOError,
    emit_report,
    load_report,
    read_csv_aggregates,
)

SMALL = dict(n=10, r=2, trials=3, p_grid=[0.5, 1.0])


@pytest.fixture(scope="module")
def small_report():
    return run_phase_transition(ExperimentConfig(**SMALL))


@pytest.fixture(scope="module")
def wine_path(tmp_path_factory):
    pytest.importorskip("sklearn")
    return write_table(builtin_table("wine"), tmp_path_factory.mktemp("data") / "wine.csv")


class TestInstances:
    @pytest.mark.parametrize("n,r,seed", [(8, 1, 0), (32, 4, 7), (20, 20, 3)])
    def test_unit_norm_and_rank(self, n, r, seed):
        X, svd = gen_instance(n, r, seed)
        assert np.linalg.norm(X) == pytest.approx(1.0, abs=1e-10)
        s = np.linalg.svd(X, compute_uv=False)
        assert s[r - 1] == pytest.approx(1 / math.sqrt(r), abs=1e-10)
        if r < n:
            assert s[r] < 1e-12

    def test_deterministic(self):
        np.testing.assert_array_equal(gen_instance(12, 3, 5)[0], gen_instance(12, 3, 5)[0])

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            gen_instance(4, 5, 0)

    def test_seeds_distinct(self):
        a, b, c = trial_seeds(0, 1, 2)
        assert len({tuple(s.generate_state(2)) for s in (a, b, c)}) == 3


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(p_grid=[0.0]), dict(p_grid=[1.5]), dict(trials=0), dict(tol=0), dict(methods=("foo",)), dict(r=40)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_default_grid(self):
        assert ExperimentConfig(n=4).p_grid == [0.25, 0.5, 0.75, 1.0]


class TestPhaseTransition:
    def test_full_sampling_succeeds(self, small_report):
        for a in small_report.aggregates:
            if a.p == 1.0:
                assert a.success_rate == 1.0

    def test_rates_from_records(self, small_report):
        for a in small_report.aggregates:
            recs = [r for r in small_report.records if r.method == a.method and r.p == a.p]
            assert a.success_rate == sum(r.success for r in recs) / len(recs)
            assert a.trials == len(recs)
            assert all(r.success <= r.converged for r in recs)

    def test_paired_instances(self, small_report):
        # At p = 1 every method sees the same X*, so all errors are ~0 together.
        assert {r.method for r in small_report.records} == {"mc", "corr", "wmc", "dwmc"}
        by_pair = {}
        for r in small_report.records:
            by_pair.setdefault((r.p_index, r.trial), set()).add(r.method)
        assert all(len(v) == 4 for v in by_pair.values())

    def test_worker_count_independent(self, small_report):
        other = run_phase_transition(ExperimentConfig(**SMALL, workers=2))
        assert [(r.method, r.error) for r in other.records] == [(r.method, r.error) for r in small_report.records]

    def test_lambda_grid(self):
        rep = run_phase_transition(ExperimentConfig(n=8, r=1, trials=2, p_grid=[1.0], methods=("corr",), lambda_grid=[0, 0.5]))
        assert sorted(a.lam for a in rep.select("corr")) == [0.0, 0.5]
        assert len(rep.select("corr", 0.5)) == 1

    def test_reproducible_files(self, tmp_path, small_report):
        again = run_phase_transition(ExperimentConfig(**SMALL))
        emit_report(small_report, "csv", tmp_path / "a.csv")
        emit_report(again, "csv", tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


class TestReport:
    def test_csv_round_trip(self, tmp_path, small_report):
        path = emit_report(small_report, "csv", tmp_path / "r.csv")
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        assert read_csv_aggregates(path) == small_report.aggregates

    def test_json_round_trip(self, tmp_path, small_report):
        path = emit_report(small_report, "json", tmp_path / "r.json")
        back = load_report(path)
        assert back.aggregates == small_report.aggregates
        assert back.records == small_report.records

    def test_empty_report(self, tmp_path):
        path = emit_report(ExperimentReport(), "csv", tmp_path / "e.csv")
        assert path.read_text().strip() == ",".join(CSV_COLUMNS)

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(ExperimentReport(), "xml", tmp_path / "e.xml")

    def test_io_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ReportIOError, match="file"):
            emit_report(ExperimentReport(), "csv", blocker / "sub" / "x.csv")


class TestDatasets:
    def test_wine_similarity(self, wine_path):
        S, Z = load_dataset(DatasetSpec.reference("wine", wine_path))
        assert S.shape == (178, 178) and Z.shape == (178, 13)
        assert np.linalg.matrix_rank(S) == 3
        np.testing.assert_array_equal(S, S.T)
        assert np.all(np.diag(S) == 1)
        assert set(np.unique(S)) <= {0.0, 1.0}
        assert np.linalg.eigvalsh(S).min() > -1e-9

    def test_iris_shape(self, tmp_path):
        pytest.importorskip("sklearn")
        path = write_table(builtin_table("iris"), tmp_path / "iris.txt")
        S, _ = load_dataset(DatasetSpec.reference("iris", path))
        assert S.shape == (150, 150) and np.linalg.matrix_rank(S) == 3

    def test_same_label_rows_equal(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("1 2 0\n3 4 1\n5 6 0\n")
        S, _ = load_dataset(DatasetSpec(str(path)))
        np.testing.assert_array_equal(S[0], S[2])

    def test_header_and_label_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("label,a,b\n0,1,2\n1,3,4\n")
        S, Z = load_dataset(DatasetSpec(str(path), label_column=0, skip_header=True, preprocessing="none"))
        np.testing.assert_array_equal(Z, [[1, 2], [3, 4]])
        np.testing.assert_array_equal(S, np.eye(2))

    @pytest.mark.parametrize("text", ["1,2\n3,x\n", "1,2\n3\n", ""])
    def test_parse_errors(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(DatasetError):
            load_dataset(DatasetSpec(str(path)))

    def test_class_mismatch(self, wine_path):
        with pytest.raises(DatasetError, match="classes"):
            load_dataset(DatasetSpec(str(wine_path), n_classes=4))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(DatasetSpec(str(tmp_path / "nope.csv")))

    def test_full_sampling(self, wine_path):
        rep = run_real_dataset(DatasetSpec.reference("wine", wine_path), 3, [1.0], 1,
                               RealDataConfig(methods=("mc", "corr", "wmc", "dwmc")))
        for a in rep.aggregates:
            assert a.mean_rel_error < 1e-6
        assert len(rep.provenance["principal_angles"]) == 3


class TestCli:
    def test_phase_with_config_override(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 8\nr = 1\ntrials = 2  # small\np_grid = 0.5, 1.0\nmethods = mc,corr\ntag = fromfile\n")
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert cli.main(["phase", "--config", str(cfg), "--trials", "1"]) == 0
        out = tmp_path / "env" / "fromfile.json"
        doc = json.loads(out.read_text())
        assert doc["provenance"]["config"]["trials"] == 1
        assert doc["provenance"]["config"]["n"] == 8
        assert (tmp_path / "env" / "fromfile.csv").exists()

    def test_out_dir_flag_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        args = ["phase", "--n", "6", "--r", "1", "--trials", "1", "--p-grid", "1.0", "--methods", "mc",
                "--out-dir", str(tmp_path / "flag")]
        assert cli.main(args) == 0
        assert (tmp_path / "flag" / "phase.csv").exists()
        assert not (tmp_path / "env").exists()

    def test_certify(self, tmp_path):
        assert cli.main(["certify", "--n", "12", "--r", "1", "--p", "0.9", "--out-dir", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "certify.json").read_text())
        assert doc["theory"]["alpha1"] == pytest.approx(1.0)
        assert doc["certificate"]["decay"][0] == pytest.approx(1.0)

    def test_report(self, tmp_path, small_report, capsys):
        src = emit_report(small_report, "json", tmp_path / "r.json")
        assert cli.main(["report", str(src), "--csv", str(tmp_path / "r.csv")]) == 0
        assert read_csv_aggregates(tmp_path / "r.csv") == small_report.aggregates

    def test_dataset_path(self, tmp_path, wine_path):
        args = ["dataset", "--path", str(wine_path), "--n-classes", "3", "--p-grid", "1.0", "--trials", "1",
                "--methods", "mc", "--out-dir", str(tmp_path)]
        assert cli.main(args) == 0
        assert (tmp_path / "dataset_wine.csv").exists()

    @pytest.mark.parametrize(
        "cfg_text,extra",
        [("bogus = 1\n", []), ("trials = many\n", []), ("no equals sign\n", [])],
    )
    def test_bad_config(self, tmp_path, cfg_text, extra, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(cfg_text)
        assert cli.main(["phase", "--config", str(cfg), *extra]) != 0
        assert "error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert cli.main(["phase", "--config", str(tmp_path / "none.cfg")]) != 0

    def test_bad_dataset(self, tmp_path):
        assert cli.main(["dataset", "--path", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) != 0

    def test_dataset_needs_source(self, tmp_path):
        assert cli.main(["dataset", "--out-dir", str(tmp_path)]) != 0

    def test_bad_value_in_domain(self, tmp_path):
        assert cli.main(["phase", "--trials", "0", "--out-dir", str(tmp_path)]) != 0

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["phase", "--methods", "foo"])
        assert exc.value.code != 0
