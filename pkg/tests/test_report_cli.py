import csv
import json
import logging

import numpy as np
import pytest

from tsidec import cli, report
from tsidec.evaluation import balance_from_sizes
from tsidec.windowing import TimeSeries

SMALL = ["--resample-len", "100", "--window-size", "10", "--stride", "10", "--latent-dim", "8",
         "--pretrain-epochs", "3", "--epochs", "3", "--batch-size", "8"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- report


def test_cluster_stats_table6_cardinalities():
    sizes = [1562, 488, 466, 440, 353, 313, 305]
    labels = np.repeat(np.arange(7), sizes)
    series = [TimeSeries(str(i), [0.0, 1.0], {"weight": 10.0, "energy": 5000.0 + j, "duration": 60.0})
              for i, j in enumerate(labels)]
    rows = report.cluster_stats(series, labels, 7)
    card = [r["cardinality"] for r in rows]
    assert sum(card) == 3927
    assert 100 * balance_from_sizes(card)[0] == pytest.approx(39.8, abs=0.05)
    assert rows[3]["mean_energy"] == 5003.0
    assert rows[3]["energy_per_weight"] == pytest.approx(500.3)
    assert rows[0]["duration_unit"] == "seconds"


def test_cluster_stats_without_metadata(caplog):
    series = [TimeSeries(str(i), np.arange(3 + i, dtype=float)) for i in range(4)]
    rows = report.cluster_stats(series, [0, 0, 1, 1])
    assert set(rows[0]) == {"cluster", "cardinality", "mean_duration", "duration_unit"}
    assert rows[1]["mean_duration"] == 5.5 and rows[1]["duration_unit"] == "samples"
    series[0] = TimeSeries("0", [1.0, 2.0], {"weight": 3.0})
    with caplog.at_level(logging.WARNING):
        rows = report.cluster_stats(series, [0, 0, 1, 1])
    assert "mean_weight" not in rows[0]
    assert "weight" in caplog.text


def test_plot_centers(tmp_path, caplog):
    curves = np.random.default_rng(0).random((9, 20))
    labels = np.array([0, 0, 0, 1, 1, 1, 3, 3, 3])
    with caplog.at_level(logging.INFO):
        n = report.plot_centers(curves, labels, tmp_path / "a.svg", k=4)
    assert n == 3
    assert "cluster 2 is empty" in caplog.text
    text = (tmp_path / "a.svg").read_text()
    assert text.count("<polyline") == 3 and 'version="1.1"' in text
    report.plot_centers(curves, labels, tmp_path / "b.svg", k=4)
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_pca_2d():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 5)) * [10, 3, 0.1, 0.1, 0.1]
    p = report.pca_2d(x)
    assert p.shape == (50, 2)
    np.testing.assert_allclose(p.mean(0), 0, atol=1e-12)
    assert p[:, 0].var() > p[:, 1].var()
    np.testing.assert_allclose(np.abs(p), np.abs(report.pca_2d(-x)), atol=1e-9)
    assert report.pca_2d(x[:, :1]).shape == (50, 2)


# ---------------------------------------------------------------- CLI


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    code = cli.main(["generate", "--out", str(d / "data.csv"), "--metadata", str(d / "meta.csv"),
                     "--truth", str(d / "truth.csv"), "--n-per-mode", "5", "--seed", "1"])
    assert code == 0
    return d


def test_generate_outputs(dataset):
    rows = read_csv(dataset / "data.csv")
    assert rows[0] == ["series_id", "timestamp", "value"]
    truth = read_csv(dataset / "truth.csv")
    assert len(truth) == 21
    assert {r[2] for r in truth[1:]} == {"fast_efficient", "slow_long", "dip_intervention", "high_plateau"}


def run(dataset, out, *extra):
    return cli.main(["run", "--data", str(dataset / "data.csv"), "--metadata", str(dataset / "meta.csv"),
                     "--out", str(out), *SMALL, *extra])


def test_run_bundle_and_determinism(dataset, tmp_path):
    assert run(dataset, tmp_path / "a", "--k", "4") == 0
    assert run(dataset, tmp_path / "b", "--k", "4") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for name in cli.BUNDLE_FILES:
        assert (a / name).is_file(), name
    for name in ("labels.csv", "model.tsidec", "centers_latent.csv", "history.csv", "centers.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ma, mb = (json.loads((p / "metrics.json").read_text()) for p in (a, b))
    ma.pop("timestamp"), mb.pop("timestamp")
    assert ma == mb
    labels = read_csv(a / "labels.csv")
    assert labels[0] == ["series_id", "label", "mode"] and len(labels) == 21
    assert {r[2] for r in labels[1:]} <= {"soft_C1", "hard_C2"}
    assert sum(ma["cluster_sizes"]) == 20 and ma["config"]["window_size"] == 10
    centers = read_csv(a / "centers_timeseries.csv")
    assert sum(int(r[1]) for r in centers[1:]) == 20 and len(centers[0]) == 102
    stats = read_csv(a / "cluster_stats.csv")
    assert "energy_per_weight" in stats[0]


def test_run_k_range_writes_sweep_report(dataset, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k_range = 2:3\nreps = 1\n")
    assert run(dataset, tmp_path / "s", "--config", str(cfg)) == 0
    rows = read_csv(tmp_path / "s" / "sweep_report.csv")
    assert [r[0] for r in rows[1:]] == ["2", "3"]
    assert "±" in rows[1][2]
    m = json.loads((tmp_path / "s" / "metrics.json").read_text())
    assert m["normalization_pool"] == "sweep" and m["k"] in (2, 3)


def test_error_exit_codes(dataset, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,timestamp,value\na,0,oops\n")
    assert cli.main(["run", "--data", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ParseError" and "bad.csv:2" in err["error"]["message"]
    assert run(dataset, tmp_path / "o", "--k", "1") == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--data", "x", "--out", "y", "--k", "3", "--k-range", "2:4"])
    assert exc.value.code == 2


def test_self_check_failure_exit_code(dataset, tmp_path, monkeypatch):
    def broken(*a, **k):
        raise cli.SelfCheckError("missing labels.csv")
    monkeypatch.setattr(cli, "_self_check", broken)
    assert run(dataset, tmp_path / "o", "--k", "2") == 3


def test_baseline_command(dataset, tmp_path, capsys):
    assert cli.main(["baseline", "--data", str(dataset / "data.csv"), "--k", "4", "--out", str(tmp_path / "b.csv")]) == 0
    rows = read_csv(tmp_path / "b.csv")
    assert len(rows) == 21 and rows[1][2] == "kmedoids_dtw"
    assert len(json.loads(capsys.readouterr().out)["medoids"]) == 4


def test_effective_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("seed = 5\ngamma = 0.25\n")
    args = cli.build_parser().parse_args(["run", "--data", "d", "--out", "o", "--config", str(cfg), "--seed", "9"])
    c = cli.effective_config(args)
    assert (c.seed, c.gamma, c.k) == (9, 0.25, 4)
