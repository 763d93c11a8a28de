import datetime as dt

import numpy as np
import pytest

from t2vstock import runner
from t2vstock.cli import main
from t2vstock.evaluation import evaluate, read_report
from t2vstock.ingest import extract_ticker, parse_eod_csv
from t2vstock.model import init_params, params_equal
from t2vstock.pipeline import prepare, read_dataset_csv
from t2vstock.synth import DEFAULT_TICKERS, TRADING_WEEKDAYS, generate
from t2vstock.train import TrainConfig, fit, load_checkpoint, read_epoch_log

FAST = ["--epochs", "2", "--d-model", "8", "--ffn-width", "16", "--head-width", "8", "--blocks", "1"]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "eod.csv"
    assert main(["synth", "--out", str(path), "--days", "260", "--ticker", "ACI", "--ticker", "ABBANK"]) == 0
    return path


# synthetic fixture

def test_synth_deterministic():
    assert generate(("ACI",), 50, seed=3) == generate(("ACI",), 50, seed=3)
    assert generate(("ACI",), 50, seed=3) != generate(("ACI",), 50, seed=4)


def test_synth_bars_are_valid_and_smooth():
    bars = generate(n_days=400)
    assert len(bars) == 8 * 400
    assert {b.ticker for b in bars} == set(DEFAULT_TICKERS)
    for b in bars:
        assert 0 <= b.low <= min(b.open, b.close) <= max(b.open, b.close) <= b.high
        assert b.volume >= 0 and b.date.weekday() in TRADING_WEEKDAYS
    close = np.array([b.close for b in extract_ticker(bars, "ACI").bars])
    assert np.corrcoef(close[:-1], close[1:])[0, 1] > 0.9


def test_synth_csv_parses(data_csv):
    bars = parse_eod_csv(data_csv)
    assert len(bars) == 520
    assert bars[0].date == dt.date(2012, 10, 1)


# subcommands

def test_ingest_prints_stats(data_csv, tmp_path, capsys):
    assert main(["ingest", "--data", str(data_csv), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "ACI daily: 260 bars" in out and "ABBANK weekly" in out
    assert (tmp_path / "stats_ACI_weekly.csv").read_text().startswith("column_name,min,max,mean,std")


def test_prepare_matches_library(data_csv, tmp_path):
    assert main(["prepare", "--data", str(data_csv), "--ticker", "ACI", "--out", str(tmp_path)]) == 0
    _, m = runner.series_for(parse_eod_csv(data_csv), "ACI", "daily")
    ds, _ = prepare(m)
    X, y = read_dataset_csv(tmp_path / "daily" / "ACI" / "dataset_testing.csv")
    np.testing.assert_array_equal(X, ds.X_test)
    np.testing.assert_array_equal(y, ds.y_test)


def test_train_and_evaluate_are_thin_wrappers(data_csv, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out), *FAST]) == 0
    directory = out / "daily" / "ACI"
    assert len(read_epoch_log(directory / "epoch_log.csv")) == 2

    cfg = runner.RunConfig(epochs=2, d_model=8, ffn_width=16, head_width=8, blocks=1)
    _, m = runner.series_for(parse_eod_csv(data_csv), "ACI", "daily")
    ds, _ = prepare(m)
    params, _ = fit(ds.X_train, ds.y_train, ds.X_val, ds.y_val, cfg.model_config(), cfg.train_config())
    assert params_equal(load_checkpoint(directory / "checkpoint.t2vt"), params)

    assert main(["evaluate", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out)]) == 0
    rows = read_report(directory / "metrics.csv")
    assert len(rows) == 6
    want = evaluate(params, cfg.model_config(), ds, "ACI")
    assert [f"{r.value:.2E}" for r in rows] == [f"{r.value:.2E}" for r in want]
    assert (out / "report.csv").exists() and (out / "baseline_report.csv").exists()
    text = capsys.readouterr().out
    assert "persistence" in text and "ACI" in text
    dates = (directory / "predictions_testing.csv").read_text().splitlines()
    assert dates[0] == "date,actual,predicted,residual" and len(dates) == 1 + ds.sizes[2]


def test_default_epoch_log_has_fifty_rows(data_csv, tmp_path):
    out = tmp_path / "runs"
    args = ["train", "--data", str(data_csv), "--ticker", "ABBANK", "--chart", "weekly", "--out", str(out),
            "--d-model", "8", "--ffn-width", "8", "--head-width", "4", "--blocks", "1", "--lookback", "4",
            "--ma-window", "3"]
    assert main(args) == 0
    assert [e.epoch for e in read_epoch_log(out / "weekly" / "ABBANK" / "epoch_log.csv")] == list(range(1, 51))


def test_config_file_and_flag_override(data_csv, tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# fast run\nepochs = 1\nd_model=8\nffn_width=8\nhead_width=4\nblocks=1\nseed=5\n")
    out = tmp_path / "runs"
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out),
                 "--config", str(conf), "--seed", "9"]) == 0
    saved = runner.load_saved_config(out / "daily" / "ACI")
    assert saved.seed == 9 and saved.epochs == 1 and saved.d_model == 8


def test_unknown_config_key(data_csv, tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("epochz=3\n")
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--config", str(conf),
                 "--out", str(tmp_path)]) == 2


# exit codes

def test_missing_data_is_input_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--ticker", "ACI"]) == 2


def test_bad_row_is_input_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("trading_code,date,open,high,low,close,volume\nACI,2020-01-05,10,9,11,10,5\n")
    assert main(["ingest", "--data", str(p)]) == 2
    assert "row 2" in capsys.readouterr().err


def test_unknown_ticker_is_input_error(data_csv, tmp_path):
    assert main(["prepare", "--data", str(data_csv), "--ticker", "XYZ", "--out", str(tmp_path)]) == 2


def test_bad_argument_is_input_error():
    assert main(["train", "--chart", "hourly"]) == 2


def test_divergence_is_training_failure(data_csv, tmp_path):
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--out", str(tmp_path),
                 *FAST, "--learning-rate", "1e200"]) == 3


def test_artifact_mismatch(data_csv, tmp_path):
    out = tmp_path / "runs"
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out), *FAST]) == 0
    assert main(["evaluate", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out),
                 "--lookback", "6"]) == 4
    assert main(["evaluate", "--data", str(data_csv), "--ticker", "ABBANK", "--out", str(out)]) == 4


def test_corrupt_checkpoint_is_artifact_error(data_csv, tmp_path):
    out = tmp_path / "runs"
    assert main(["train", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out), *FAST]) == 0
    ckpt = out / "daily" / "ACI" / "checkpoint.t2vt"
    ckpt.write_bytes(ckpt.read_bytes()[:-8])
    assert main(["evaluate", "--data", str(data_csv), "--ticker", "ACI", "--out", str(out)]) == 4


def test_report_without_metrics(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 4


def test_report_merges(data_csv, tmp_path):
    out = tmp_path / "runs"
    base = ["--data", str(data_csv), "--ticker", "ACI", "--ticker", "ABBANK", "--out", str(out)]
    assert main(["train", *base, *FAST]) == 0
    assert main(["evaluate", *base]) == 0
    (out / "report.csv").unlink()
    assert main(["report", "--out", str(out)]) == 0
    assert len(read_report(out / "report.csv")) == 12


def test_runner_rejects_bad_knobs():
    with pytest.raises(ValueError):
        runner.RunConfig(split="8:1")
    with pytest.raises(ValueError):
        runner.RunConfig(week_start="funday")
    assert runner.RunConfig(split="8:1:1").split_fractions() == (0.8, 0.1)


def test_init_matches_config_seed():
    cfg = runner.RunConfig(seed=4)
    assert params_equal(init_params(cfg.model_config()), init_params(cfg.model_config(), seed=4))
    assert cfg.train_config() == TrainConfig(seed=4)
