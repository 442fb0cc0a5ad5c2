import json
import subprocess
import sys

import pytest

from camsync.cli import PRESET_CONFIGS, main
from camsync.config import bundled_names


def test_simulate_writes_outputs(tmp_path):
    assert main(["simulate", "--trials", "3", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trials.csv").read_text().count("\n") == 4


def test_simulate_is_deterministic(tmp_path):
    for d in ("a", "b"):
        main(["simulate", "--config", "default", "--trials", "4", "--seed", "3", "--out", str(tmp_path / d)])
    for name in ("trials.csv", "summary.json", "histograms.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_output(tmp_path):
    for s in ("1", "2"):
        main(["simulate", "--trials", "3", "--seed", s, "--out", str(tmp_path / s)])
    assert (tmp_path / "1" / "trials.csv").read_bytes() != (tmp_path / "2" / "trials.csv").read_bytes()


@pytest.mark.parametrize("preset,name", [("table2", "table2.json"), ("fig6", "fig6.json"),
                                         ("table3", "table3.json"), ("fig5", "fig5.csv"),
                                         ("convergence", "convergence.csv"), ("wedge", "wedge.csv")])
def test_presets(tmp_path, preset, name):
    assert main(["simulate", "--preset", preset, "--trials", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / name).stat().st_size > 0


def test_table1_preset(tmp_path):
    main(["simulate", "--preset", "table1", "--trials", "5", "--out", str(tmp_path)])
    t = json.loads((tmp_path / "table1.json").read_text())
    assert t["naive_wired"]["mean_abs"] > 1000 * t["ours"]["mean_abs"]


def test_config_file(tmp_path, capsys):
    p = tmp_path / "c.conf"
    p.write_text("trials = 2\ndevices = 3\n")
    main(["simulate", "--config", str(p)])
    assert json.loads(capsys.readouterr().out)["total"]["count"] == 4


def test_missing_config():
    with pytest.raises(SystemExit):
        main(["simulate", "--config", "does-not-exist"])


@pytest.mark.network
def test_leader_and_client_processes():
    leader = subprocess.Popen([sys.executable, "-m", "camsync.cli", "sync-leader", "--bind", "127.0.0.1:0"],
                              stdout=subprocess.PIPE, text=True)
    try:
        addr = leader.stdout.readline().split()[-1]
        out = subprocess.run([sys.executable, "-m", "camsync.cli", "sync-client", "--leader", addr,
                              "--samples", "50", "--filter", "mean"], capture_output=True, text=True, timeout=30,
                             check=True)
        res = json.loads(out.stdout)
        assert res["exchanges"] == 50 and res["filter"] == "mean"
    finally:
        leader.terminate()
        leader.wait(5)


def test_client_reports_unreachable_leader(tmp_path):
    import socket
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    try:
        host, port = s.getsockname()
        rc = main(["sync-client", "--leader", f"{host}:{port}", "--samples", "1", "--timeout", "0.05",
                   "--max-failures", "1"])
        assert rc == 2
    finally:
        s.close()


def test_preset_subcommand_matches_simulate(tmp_path):
    main(["table3", "--out", str(tmp_path / "a")])
    main(["simulate", "--preset", "table3", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "table3.json").read_bytes() == (tmp_path / "b" / "table3.json").read_bytes()


def test_table3_preset_uses_bundled_config(tmp_path):
    main(["table3", "--out", str(tmp_path)])
    t = json.loads((tmp_path / "table3.json").read_text())
    assert t["messages"] == 10_000
    assert PRESET_CONFIGS["table3"] in bundled_names()


def test_align_preset_reports_both_conventions(capsys):
    main(["align", "--trials", "4"])
    res = json.loads(capsys.readouterr().out)
    assert set(res) == {"centered", "raw"}


def test_timing_preset(capsys):
    main(["simulate", "--preset", "timing", "--trials", "2"])
    res = json.loads(capsys.readouterr().out)
    assert res["trials"] == 2 and res["frame_injection_time_mean"] < res["reset_sampling_time_mean"]
