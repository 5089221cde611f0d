import json
import math
from pathlib import Path

import numpy as np
import pytest

from pogp import NumericalFailureError
from pogp import bench
from pogp.bench import (
    CSV_HEADER,
    ExperimentConfig,
    load_dataset,
    prepare_data,
    run_experiment,
    standardize,
)
from pogp.cli import main
from pogp.errors import DataError, InvalidArgumentError

BOSTON = Path(__file__).parent / "data" / "boston.csv"
SMALL_KERNEL = {"amplitude": 1.0, "lengthscales": [0.15], "noise_variance": 0.01}


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def sine_files(tmp_path):
    X, y = bench.make_sine_stream(160, 9)
    Xt, yt = bench.make_sine_stream(40, 10)
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    np.savetxt(train, np.column_stack([X, y]), delimiter=",")
    np.savetxt(test, np.column_stack([Xt, yt]), delimiter=",")
    return train, test


class TestLoadDataset:
    def test_three_rows(self, tmp_path):
        X, y = load_dataset(write(tmp_path, "a.csv", "0,1\n1,2\n2,3\n"), has_header=False)
        np.testing.assert_array_equal(X, [[0], [1], [2]])
        np.testing.assert_array_equal(y, [1, 2, 3])

    def test_header_detected(self, tmp_path):
        X, y = load_dataset(write(tmp_path, "a.csv", "x,y\n0.5,1e-3\n"))
        assert X.shape == (1, 1) and y[0] == 1e-3

    @pytest.mark.parametrize(
        "text, match",
        [("0,1\n1,2,3\n", "line 2"), ("0,1\n1,abc\n", "line 2"), ("", "no data"), ("0,1\n1;2\n", "line 2")],
    )
    def test_parse_errors(self, tmp_path, text, match):
        with pytest.raises(DataError, match=match):
            load_dataset(write(tmp_path, "bad.csv", text), has_header=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nope.csv")

    def test_boston_split(self, tmp_path):
        X, y = load_dataset(BOSTON)
        assert X.shape == (506, 13)
        data = prepare_data(ExperimentConfig(str(BOSTON), "", split_fraction=0.9))
        assert (len(data.y_train), len(data.y_test)) == (455, 51)

    def test_abalone_sized_split(self, tmp_path):
        rows = "\n".join(f"{i},{i % 7}" for i in range(4177))
        path = write(tmp_path, "ab.csv", rows + "\n")
        data = prepare_data(ExperimentConfig(str(path), "", split_fraction=0.75))
        assert (len(data.y_train), len(data.y_test)) == (3133, 1044)


class TestStandardize:
    def test_already_standard(self, rng):
        X = rng.normal(size=(50, 3))
        X = (X - X.mean(0)) / X.std(0)
        Xs, _, _, _ = standardize(X)
        np.testing.assert_allclose(Xs, X, atol=1e-12)

    def test_constant_column(self, rng):
        X = np.column_stack([rng.normal(size=20), np.full(20, 3.0)])
        with pytest.warns(UserWarning, match="constant"):
            Xs, _, _, scale = standardize(X)
        np.testing.assert_array_equal(Xs[:, 1], X[:, 1])
        assert scale[1] == 1.0

    def test_train_only_statistics(self, rng):
        X = rng.normal(size=(30, 2))
        _, _, m1, s1 = standardize(X, rng.normal(size=(5, 2)))
        _, _, m2, s2 = standardize(X, rng.normal(size=(5, 2)) + 100)
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(s1, s2)

    def test_empty_train(self):
        with pytest.raises(InvalidArgumentError):
            standardize(np.zeros((0, 2)))


class TestRunExperiment:
    def config(self, train, test, **kw):
        base = dict(data_path=str(train), output_path="", test_path=str(test), kernel=SMALL_KERNEL,
                    eval_every=20)
        base.update(kw)
        return ExperimentConfig(**base)

    def test_dense_order_is_sample_count(self, sine_files):
        r = run_experiment(self.config(*sine_files, algo="dense"))
        assert r.final_model_order == 160
        assert [rec.model_order for rec in r.records] == list(range(1, 161))

    def test_zero_budget_matches_dense(self, sine_files):
        a = run_experiment(self.config(*sine_files, algo="dense"))
        b = run_experiment(self.config(*sine_files, algo="pog", eps0=0.0))
        for ra, rb in zip(a.records, b.records):
            assert ra.model_order == rb.model_order
            if ra.smse is not None:
                assert abs(ra.smse - rb.smse) <= 1e-8 and abs(ra.msll - rb.msll) <= 1e-8
        assert abs(a.final.smse - b.final.smse) <= 1e-8

    def test_sparse_eval(self, sine_files):
        r = run_experiment(self.config(*sine_files, eval_every=10_000))
        assert all(rec.smse is None and rec.msll is None for rec in r.records)
        assert r.final is not None

    def test_final_window_average(self, sine_files):
        cfg = self.config(*sine_files, algo="dense", eval_every=1)
        r = run_experiment(cfg)
        tail = r.records[-bench.FINAL_WINDOW:]
        assert r.final.smse == pytest.approx(np.mean([x.smse for x in tail]), rel=1e-12)

    def test_epochs(self, sine_files):
        r = run_experiment(self.config(*sine_files, epochs=2, eps0=1e-2))
        assert [rec.t for rec in r.records] == list(range(1, 321))

    def test_grid_reference(self, sine_files, tmp_path):
        grid = tmp_path / "grid.csv"
        np.savetxt(grid, np.linspace(0, 1, 9)[:, None], delimiter=",")
        r = run_experiment(self.config(*sine_files, ref_mode=f"grid:{grid}", eps0=1e-2))
        assert all(rec.step_hellinger <= rec.eps_t for rec in r.records)

    @pytest.mark.parametrize(
        "kw", [dict(split_fraction=0.5), dict(eval_every=0), dict(algo="sogp"), dict(ref_mode="all")],
    )
    def test_invalid_config(self, sine_files, kw):
        with pytest.raises(InvalidArgumentError):
            run_experiment(self.config(*sine_files, **kw))

    def test_timing_only_on_request(self, sine_files):
        assert all(r.elapsed_micros is None for r in run_experiment(self.config(*sine_files)).records)
        timed = run_experiment(self.config(*sine_files, timing=True)).records
        assert all(isinstance(r.elapsed_micros, int) for r in timed)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


class TestCli:
    def run(self, train, test, out, *extra):
        return main(["run", "--data", str(train), "--test", str(test), "--kernel", json.dumps(SMALL_KERNEL),
                     "--eps", "1e-3", "--eval-every", "25", "--out", str(out), *extra])

    def test_run_writes_csv_and_sidecar(self, sine_files, tmp_path):
        out = tmp_path / "rec.csv"
        assert self.run(*sine_files, out) == 0
        header, rows = read_csv(out)
        assert tuple(header) == CSV_HEADER
        assert [int(r[0]) for r in rows] == list(range(1, 161))
        for r in rows:
            assert float(r[3]) <= float(r[2]) + 1e-12
            assert int(r[1]) <= int(r[0])
            assert (r[4] == "") == (int(r[0]) % 25 != 0)
        side = json.loads(Path(str(out) + ".json").read_text())
        assert side["kernel"] == SMALL_KERNEL
        assert side["final_model_order"] == int(rows[-1][1])

    def test_byte_identical_reruns(self, sine_files, tmp_path):
        outs = [tmp_path / f"r{i}.csv" for i in range(3)]
        self.run(*sine_files, outs[0], "--loo", "rebuild")
        self.run(*sine_files, outs[1], "--loo", "rebuild", "--threads", "4")
        self.run(*sine_files, outs[2])
        assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()

    def test_tuned_run(self, sine_files, tmp_path):
        out = tmp_path / "t.csv"
        code = main(["run", "--data", str(sine_files[0]), "--split", "0.8", "--tune", "50",
                     "--eps", "1e-3", "--standardize", "--shuffle", "--out", str(out)])
        assert code == 0
        side = json.loads(Path(str(out) + ".json").read_text())
        assert side["n_train"] == 128 and side["n_test"] == 32

    def test_tune_prints_json(self, sine_files, capsys):
        assert main(["tune", "--data", str(sine_files[0]), "--subset", "60", "--seed", "1"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert set(d) == {"amplitude", "lengthscales", "noise_variance"}

    def test_hellinger(self, capsys):
        assert main(["hellinger", "--mean1", "0", "--var1", "1", "--mean2", "1", "--var2", "1"]) == 0
        assert float(capsys.readouterr().out) == pytest.approx(math.sqrt(1 - math.exp(-1 / 8)), abs=1e-14)

    def test_config_error_exit_code(self, sine_files, tmp_path):
        code = main(["run", "--data", str(sine_files[0]), "--split", "1.5", "--out", str(tmp_path / "o.csv")])
        assert code == 2
        with pytest.raises(SystemExit) as exc:
            main(["run", "--data", "x.csv"])
        assert exc.value.code == 2

    def test_data_error_exit_code(self, tmp_path):
        bad = write(tmp_path, "bad.csv", "1,2\n3\n")
        code = main(["run", "--data", str(bad), "--split", "0.5", "--out", str(tmp_path / "o.csv")])
        assert code == 3
        code = main(["run", "--data", str(tmp_path / "missing.csv"), "--split", "0.5",
                     "--out", str(tmp_path / "o.csv")])
        assert code == 3

    def test_numerical_failure_flushes_partial_records(self, sine_files, tmp_path, monkeypatch):
        real = bench.pog_step

        def flaky(state, x, y):
            if state.step_count == 10:
                raise NumericalFailureError("boom")
            return real(state, x, y)

        monkeypatch.setattr(bench, "pog_step", flaky)
        out = tmp_path / "partial.csv"
        assert self.run(*sine_files, out) == 4
        _, rows = read_csv(out)
        assert len(rows) == 10
