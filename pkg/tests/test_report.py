import json
import math

import pytest

from fairfl.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from fairfl.config import SimConfig
from fairfl.report import (RunManifest, compare_schemes, emit_records, parse_records, read_records)
from fairfl.simulator import RECORD_FIELDS, RoundRecord, run_simulation

HEADER = "round,device,scheme,loss,deviation,iterations,tx_power_w,rate_bps,e_cp_j,e_tx_j,e_tot_j,sigma_g,utility,skipped"


def rec(m, k, e_tot, loss=0.5, scheme="proposed"):
    return RoundRecord(round=m, device=k, scheme=scheme, loss=loss, deviation=0.0, iterations=10,
                       tx_power_w=0.1, rate_bps=1e5, e_cp_j=e_tot / 2, e_tx_j=e_tot / 2, e_tot_j=e_tot,
                       sigma_g=5.1, utility=0.1)


def test_header_matches_fields():
    assert ",".join(RECORD_FIELDS) == HEADER


def test_empty_records_write_header_only(tmp_path):
    path = emit_records([], tmp_path / "r.csv")
    assert path.read_text() == HEADER + "\n"


def test_csv_round_trip_exact(tmp_path):
    cfg = SimConfig().replace(run__devices=3, run__rounds=4)
    recs = run_simulation(cfg)
    path = emit_records(list(reversed(recs)), tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 3 * 4
    assert read_records(path) == recs


def test_skipped_rows_have_empty_metrics(tmp_path):
    recs = [RoundRecord(round=0, device=0, scheme="benchmark", skipped=True), rec(0, 1, 0.3)]
    text = emit_records(recs, tmp_path / "r.csv").read_text().splitlines()
    assert text[1] == "0,0,benchmark,,,,,,,,,,,1"
    assert text[2].endswith(",0")
    back = parse_records("\n".join(text))
    assert back[0].skipped and math.isnan(back[0].loss) and back[0].iterations is None


def test_floats_use_17_significant_digits(tmp_path):
    r = rec(0, 0, 0.1 + 0.2)
    text = emit_records([r], tmp_path / "r.csv").read_text()
    assert "0.30000000000000004" in text


def test_emit_reports_path_on_failure(tmp_path):
    bad = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        emit_records([], bad)


def test_compare_identical_is_zero():
    recs = [rec(m, k, 1.0 + k, 0.5 + 0.1 * k) for m in range(2) for k in range(2)]
    cmp = compare_schemes(recs, recs)
    for key in ("energy_std_reduction_pct", "mean_energy_reduction_pct", "mean_loss_gap_pct"):
        assert cmp[key] == 0.0
    assert {"loss_std_proposed", "loss_std_benchmark"} <= cmp.keys()


def test_compare_hand_values():
    prop = [rec(0, 0, 1.0, 0.6), rec(0, 1, 1.2, 0.6)]
    bench = [rec(0, 0, 1.0, 0.4, "benchmark"), rec(0, 1, 2.0, 0.6, "benchmark")]
    cmp = compare_schemes(prop, bench)
    # energy std 0.1 vs 0.5, means 1.1 vs 1.5, losses 0.6 vs 0.5 with stds 0 vs 0.1
    assert cmp["energy_std_reduction_pct"] == pytest.approx(80.0)
    assert cmp["mean_energy_reduction_pct"] == pytest.approx(100 * 0.4 / 1.5)
    assert cmp["mean_loss_gap_pct"] == pytest.approx(20.0)
    assert cmp["loss_std_proposed"] == pytest.approx(0.0)
    assert cmp["loss_std_benchmark"] == pytest.approx(0.1)


def test_compare_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        compare_schemes([rec(0, 0, 1.0)], [rec(0, 0, 1.0), rec(0, 1, 1.0)])


def test_manifest_round_trip(tmp_path):
    cfg = SimConfig().replace(run__seed=5)
    m = RunManifest.for_config(cfg, ["proposed"], "0.1.0")
    m.write(tmp_path / "m.json")
    back = RunManifest.read(tmp_path / "m.json")
    assert back == m and back.snapshot() == cfg


def test_cli_both_schemes(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("run.devices = 3\n")
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--rounds", "3", "--seed", "11", "--out", str(out)]) == EXIT_OK
    for name in ("records_proposed.csv", "records_benchmark.csv", "summary.json", "manifest.json"):
        assert (out / name).exists()
    manifest = RunManifest.read(out / "manifest.json")
    assert manifest.seed == 11 and manifest.finished is not None
    assert manifest.snapshot().run.rounds == 3
    summary = json.loads((out / "summary.json").read_text())
    assert "energy_std_reduction_pct" in summary["comparison"]
    assert "proposed vs benchmark" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("privacy.epsilon_g = 1.5\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_runtime_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["--rounds", "1", "--out", str(blocker / "sub")]) == EXIT_RUNTIME
