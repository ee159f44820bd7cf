import csv

import numpy as np
import pytest

from pgbart.cli import PLOT_QUANTITIES, main, read_plotdata
from pgbart.data import read_keyvalue
from pgbart.diagnostics import TRACE_COLUMNS, read_trace


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def trace_columns(path, exclude=("elapsed_s",)):
    table = rows(path)
    keep = [i for i, name in enumerate(table[0]) if name not in exclude]
    return [[r[i] for i in keep] for r in table]


@pytest.fixture(scope="module")
def cube(tmp_path_factory):
    out = tmp_path_factory.mktemp("cube")
    assert main(["gen-hypercube", "--d", "2", "--seed", "3", "--out", str(out)]) == 0
    return out


def train(out, data, *extra):
    argv = ["train", "--data", str(data / "train.csv"), "--test-data", str(data / "test.csv"),
            "--config", str(data / "metadata.txt"), "--out", str(out), *extra]
    return main(argv)


class TestGenHypercube:
    def test_row_counts(self, tmp_path):
        assert main(["gen-hypercube", "--d", "4", "--seed", "1", "--out", str(tmp_path)]) == 0
        assert len(rows(tmp_path / "train.csv")) == 161
        assert len(rows(tmp_path / "test.csv")) == 161
        assert len(rows(tmp_path / "vertices.csv")) == 17

    def test_metadata(self, cube):
        meta = read_keyvalue(cube / "metadata.txt")
        assert float(meta["beta_s"]) == 1.0 and int(meta["m"]) == 1

    def test_deterministic(self, cube, tmp_path):
        assert main(["gen-hypercube", "--d", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
        for name in ("train.csv", "test.csv", "test_truth.csv", "vertices.csv", "metadata.txt"):
            assert (tmp_path / name).read_bytes() == (cube / name).read_bytes()

    def test_missing_d(self, tmp_path):
        assert main(["gen-hypercube", "--out", str(tmp_path)]) == 2


class TestTrain:
    def test_zero_iterations(self, cube, tmp_path):
        assert train(tmp_path, cube, "--sampler", "pg", "--iters", "0", "--burn-in", "0") == 0
        assert len(read_trace(tmp_path / "trace.csv")) == 1

    def test_outputs(self, cube, tmp_path):
        assert train(tmp_path, cube, "--sampler", "cgm", "--iters", "30", "--burn-in", "10") == 0
        trace = read_trace(tmp_path / "trace.csv")
        assert len(trace) == 31
        assert rows(tmp_path / "trace.csv")[0] == list(TRACE_COLUMNS)
        assert len(rows(tmp_path / "predictions.csv")) == 41
        config = read_keyvalue(tmp_path / "config.txt")
        assert config["command"] == "train" and config["sampler"] == "cgm" and config["iters"] == "30"
        assert "posterior_mean_mse" in read_keyvalue(tmp_path / "summary.txt")

    def test_samplers_differ(self, cube, tmp_path):
        for s in ("cgm", "pg"):
            assert train(tmp_path / s, cube, "--sampler", s, "--iters", "20", "--burn-in", "5") == 0
        assert trace_columns(tmp_path / "cgm" / "trace.csv") != trace_columns(tmp_path / "pg" / "trace.csv")

    def test_rerun_from_config(self, cube, tmp_path):
        assert train(tmp_path / "a", cube, "--sampler", "pg", "--iters", "15", "--burn-in", "5") == 0
        assert main(["train", "--config", str(tmp_path / "a" / "config.txt"), "--out", str(tmp_path / "b")]) == 0
        assert trace_columns(tmp_path / "a" / "trace.csv") == trace_columns(tmp_path / "b" / "trace.csv")
        for name in ("predictions.csv",):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_inputs_untouched(self, cube, tmp_path):
        before = {p.name: p.read_bytes() for p in cube.iterdir()}
        assert train(tmp_path, cube, "--sampler", "growprune", "--iters", "5", "--burn-in", "1") == 0
        assert {p.name: p.read_bytes() for p in cube.iterdir()} == before

    def test_flag_beats_config(self, cube, tmp_path):
        assert train(tmp_path, cube, "--sampler", "cgm", "--iters", "2", "--burn-in", "0", "--beta-s", "0.7") == 0
        assert float(read_keyvalue(tmp_path / "config.txt")["beta_s"]) == 0.7

    @pytest.mark.parametrize("extra", [
        ["--sampler", "pg", "--particles", "1"],
        ["--sampler", "nope"],
        ["--sampler", "pg", "--alpha-s", "1.5"],
    ])
    def test_usage_errors(self, cube, tmp_path, extra):
        assert train(tmp_path, cube, *extra) == 2

    def test_missing_data(self, tmp_path):
        assert main(["train", "--sampler", "pg", "--out", str(tmp_path)]) == 2

    def test_unknown_config_key(self, cube, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("sampler=pg\nparticle=5\n")
        argv = ["train", "--config", str(cfg), "--data", str(cube / "train.csv"), "--out", str(tmp_path / "o")]
        assert main(argv) == 2

    def test_bad_csv_is_runtime_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3,x\n")
        assert main(["train", "--sampler", "cgm", "--data", str(bad), "--out", str(tmp_path / "o")]) == 1


class TestBenchmark:
    def test_report_shape(self, tmp_path):
        argv = ["benchmark", "--d", "2", "--iters", "20", "--burn-in", "5", "--out", str(tmp_path)]
        assert main(argv) == 0
        report = rows(tmp_path / "report.csv")
        assert [r[1] for r in report[1:]] == ["pg", "cgm", "growprune"]
        assert all(r[4] == "ok" for r in report[1:])
        header = (tmp_path / "report.txt").read_text().splitlines()[1].split()
        assert header == ["dataset", "pg", "cgm", "growprune"]
        assert len(list((tmp_path / "traces").glob("*.csv"))) == 3

    def test_replicates_are_distinct(self, tmp_path):
        argv = ["benchmark", "--d", "2", "--samplers", "cgm", "--replicates", "2",
                "--iters", "10", "--burn-in", "2", "--out", str(tmp_path)]
        assert main(argv) == 0
        a, b = (trace_columns(tmp_path / "traces" / f"hypercube-2_cgm_r{r}.csv") for r in (0, 1))
        assert a != b
        assert "±" in (tmp_path / "report.txt").read_text()

    def test_failed_cell_is_recorded(self, tmp_path):
        argv = ["benchmark", "--d", "2", "--data", str(tmp_path / "missing.csv"), "--samplers", "cgm",
                "--iters", "5", "--burn-in", "1", "--out", str(tmp_path / "o")]
        assert main(argv) == 0
        status = {r[0]: r[4] for r in rows(tmp_path / "o" / "report.csv")[1:]}
        assert status == {"hypercube-2": "ok", "missing": "failed"}

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            argv = ["benchmark", "--d", "2", "--samplers", "pg,cgm", "--iters", "10", "--burn-in", "2",
                    "--out", str(tmp_path / name)]
            assert main(argv) == 0
        for trace in sorted((tmp_path / "a" / "traces").iterdir()):
            assert trace_columns(trace) == trace_columns(tmp_path / "b" / "traces" / trace.name)

    def test_rerun_from_config_keeps_protocol(self, tmp_path):
        argv = ["benchmark", "--d", "2", "--samplers", "cgm", "--iters", "10", "--burn-in", "2",
                "--out", str(tmp_path / "a")]
        assert main(argv) == 0
        assert main(["benchmark", "--config", str(tmp_path / "a" / "config.txt"), "--out", str(tmp_path / "b")]) == 0
        name = "hypercube-2_cgm_r0.csv"
        assert trace_columns(tmp_path / "a" / "traces" / name) == trace_columns(tmp_path / "b" / "traces" / name)

    def test_unscheduled_dimension(self, tmp_path):
        assert main(["benchmark", "--d", "6", "--out", str(tmp_path)]) == 2


class TestPlotdata:
    @pytest.fixture
    def traces(self, cube, tmp_path):
        for s in ("pg", "cgm"):
            assert train(tmp_path / s, cube, "--sampler", s, "--iters", "12", "--burn-in", "2") == 0
        return tmp_path

    def test_long_format(self, traces):
        out = traces / "plot"
        assert main(["plotdata", f"pg={traces / 'pg' / 'trace.csv'}", str(traces / "cgm" / "trace.csv"),
                     "--out", str(out)]) == 0
        table = rows(out / "plotdata.csv")
        assert table[0] == ["iteration", "quantity", "sampler", "value"]
        assert len(table) == 1 + 2 * len(PLOT_QUANTITIES) * 13
        assert {r[2] for r in table[1:]} == {"pg", "cgm"}

    def test_pivot_round_trip(self, traces):
        out = traces / "plot"
        assert main(["plotdata", str(traces / "pg" / "trace.csv"), "--out", str(out)]) == 0
        pivot = read_plotdata(out / "plotdata.csv")
        trace = read_trace(traces / "pg" / "trace.csv")
        for q in PLOT_QUANTITIES:
            got = [pivot["pg"][q][int(i)] for i in trace.columns["iter"]]
            np.testing.assert_array_equal(got, trace.columns[q])

    def test_missing_trace_listed(self, tmp_path, capsys):
        assert main(["plotdata", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
        assert "nope.csv" in capsys.readouterr().err
