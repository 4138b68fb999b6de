import json

import pytest

from mimo_precode import cli
from mimo_precode.errors import NoConvergence


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_parse_layout_and_grid():
    assert cli.parse_layout("2,2,2,2x8") == ((2, 2, 2, 2), 8)
    assert cli.parse_ebn0("0:2:30") == tuple(float(x) for x in range(0, 31, 2))
    assert cli.parse_ebn0("0:5:12") == (0.0, 5.0, 10.0)
    assert cli.parse_ebn0("15") == (15.0,)
    assert cli.parse_ebn0("0.1:0.1:0.3") == (0.1, 0.2, 0.3)
    assert cli.parse_ebn0("10:2:0") == ()
    with pytest.raises(cli.CliConfigError):
        cli.parse_layout("2,2")
    with pytest.raises(cli.CliConfigError):
        cli.parse_ebn0("0:0:5")


def test_parse_kinds():
    labels = [v.label for v in cli.parse_kinds("all", cli.PowerLoading.UNIFORM)]
    assert labels == ["bd", "rbd", "qrsvd-rbd", "sgmi", "lr-sgmi-zf", "lr-sgmi-mmse"]
    labels = [v.label for v in cli.parse_kinds("bd,bd-wf,rbd,sgmi", cli.PowerLoading.WATERFILL)]
    assert labels == ["bd-wf", "rbd-wf", "sgmi"]
    with pytest.raises(cli.CliConfigError):
        cli.parse_kinds("sgmi-wf", cli.PowerLoading.UNIFORM)
    with pytest.raises(cli.CliConfigError):
        cli.parse_kinds("zf", cli.PowerLoading.UNIFORM)


def test_ber_all_kinds(tmp_path, capsys):
    code, out = run(tmp_path, "ber", "--ebn0", "0:10:20", "--trials", "4", "--packet-len", "10",
                    "--kinds", "all", "--seed", "42")
    assert code == 0
    files = sorted(p.name for p in out.glob("ber_*.csv"))
    assert len(files) == 6
    text = (out / "ber_lr-sgmi-mmse.csv").read_bytes().decode()
    lines = text.split("\n")
    assert lines[0] == cli.BER_HEADER and len(lines) == 5 and lines[-1] == ""
    assert "\r" not in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(e["path"] for e in manifest["emitted_files"]) == files
    assert manifest["config"]["seed"] == 42
    assert "Eb/N0" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    args = ("ber", "--ebn0", "5:5:10", "--trials", "3", "--packet-len", "8", "--kinds", "rbd,lr-sgmi-zf")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    args = ("sumrate", "--ebn0", "0:10:20", "--trials", "5", "--kinds", "lr-sgmi-mmse")
    monkeypatch.setenv("MIMO_PRECODE_THREADS", "1")
    _, a = run(tmp_path, *args, name="a")
    monkeypatch.setenv("MIMO_PRECODE_THREADS", "2")
    _, b = run(tmp_path, *args, name="b")
    assert (a / "sumrate_lr-sgmi-mmse.csv").read_bytes() == (b / "sumrate_lr-sgmi-mmse.csv").read_bytes()


def test_invalid_layout_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "ber", "--layout", "3,3x4")
    assert code == 2
    err = capsys.readouterr().err
    assert "--layout" in err and "dimensionality constraint" in err


def test_empty_grid_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "sumrate", "--ebn0", "10:2:0")
    assert code == 2
    assert "--ebn0" in capsys.readouterr().err


def test_bad_delta_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "ber", "--delta", "0.2", "--trials", "1")
    assert code == 2
    assert "--delta" in capsys.readouterr().err


def test_sumrate_four_csvs(tmp_path):
    code, out = run(tmp_path, "sumrate", "--kinds", "bd,bd-wf,rbd,lr-sgmi-mmse", "--trials", "3",
                    "--ebn0", "0:15:30")
    assert code == 0
    names = sorted(p.name for p in out.glob("sumrate_*.csv"))
    assert names == ["sumrate_bd-wf.csv", "sumrate_bd.csv", "sumrate_lr-sgmi-mmse.csv", "sumrate_rbd.csv"]
    assert (out / "sumrate_bd.csv").read_text().startswith(cli.SUMRATE_HEADER + "\n")


def test_flops_table(tmp_path, capsys):
    code, out = run(tmp_path, "flops", "--trials", "3")
    assert code == 0
    rows = (out / "reductions.csv").read_text().splitlines()
    assert rows[0] == "ebn0_db,baseline,reduction_percent"
    assert [r.split(",")[1] for r in rows[1:]] == ["rbd", "bd", "qrsvd-rbd"]
    assert "reduction vs rbd" in capsys.readouterr().out


def test_flops_single_user(tmp_path):
    code, out = run(tmp_path, "flops", "--layout", "2x4", "--trials", "2")
    assert code == 0
    assert len((out / "flops.csv").read_text().splitlines()) == 7


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# reference run\nlayout = 2,2x4\nebn0 = 0:5:10\ntrials = 2\nkinds = bd, sgmi\npacket-len = 4\n")
    code, out = run(tmp_path, "ber", "--config", str(conf), "--kinds", "rbd")
    assert code == 0
    assert [p.name for p in out.glob("ber_*.csv")] == ["ber_rbd.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["user_rx"] == [2, 2] and manifest["config"]["packet_len"] == 4


def test_config_file_unknown_key(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = blue\n")
    code, _ = run(tmp_path, "ber", "--config", str(conf))
    assert code == 2
    assert "colour" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    import mimo_precode.simulate as sim

    def broken(ch, config, ebn0_db):
        raise NoConvergence("forced")

    monkeypatch.setattr(sim, "design", broken)
    monkeypatch.setenv("MIMO_PRECODE_THREADS", "1")
    code, _ = run(tmp_path, "ber", "--trials", "2", "--ebn0", "10", "--kinds", "bd")
    assert code == 3
    assert "trial index 0" in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "mimo_precode", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sumrate" in res.stdout
