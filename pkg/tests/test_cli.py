import json

import pytest

from coexsim.cli import CSV_COLUMNS, PLOT_COLUMNS, ResultBundle, main


def run_cli(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def run_json(capsys, *extra):
    rc, out, err = run_cli(capsys, "run", "three_wifi", "--horizon", "200ms", "--replicas", "3", *extra)
    assert rc == 0, err
    return json.loads(out), err


def test_run_json(capsys):
    d, err = run_json(capsys)
    assert d["schema_version"] == 1
    assert len(d["reports"]) == 3 and d["summary"]["seeds"] == [1, 2, 3]
    assert set(d["summary"]["mean"]) == {"wifi-a", "wifi-b", "wifi-c"}
    assert "three_wifi" in err


def test_run_csv(capsys):
    rc, out, _ = run_cli(capsys, "run", "two_wifi_one_lteu", "--horizon", "100ms", "--replicas", "2",
                         "--format", "csv")
    lines = out.strip().splitlines()
    assert rc == 0 and lines[0] == "# schema_version=1"
    assert lines[1].split(",") == list(CSV_COLUMNS)
    assert [ln.split(",")[0] for ln in lines[2:]] == ["wifi-a", "wifi-b", "lteu-c"]
    assert lines[4].split(",")[1] == "lteu" and lines[4].endswith(",2")


def test_run_deterministic_except_runtime(capsys):
    a, _ = run_json(capsys)
    b, _ = run_json(capsys)
    a.pop("runtime_s"), b.pop("runtime_s")
    assert a == b


def test_jobs_do_not_change_results(capsys):
    a, _ = run_json(capsys)
    b, _ = run_json(capsys, "--jobs", "2")
    a.pop("runtime_s"), b.pop("runtime_s")
    assert a == b


def test_seed_option(capsys):
    d, _ = run_json(capsys, "--seed", "10")
    assert d["summary"]["seeds"] == [10, 11, 12]


def test_run_out_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    rc, stdout, _ = run_cli(capsys, "run", "three_wifi", "--horizon", "50ms", "--replicas", "1", "--out", str(out))
    assert rc == 0 and stdout == ""
    ResultBundle.from_dict(json.loads(out.read_text()))


def test_run_errors_go_to_stderr(capsys):
    rc, out, err = run_cli(capsys, "run", "no_such_scenario")
    assert rc == 2 and out == "" and "no_such_scenario" in err
    rc, out, err = run_cli(capsys, "run", "three_wifi", "--horizon", "12")
    assert rc == 2 and "--horizon" in err


def test_trace(capsys):
    rc, out, _ = run_cli(capsys, "trace", "two_wifi_one_laa", "--horizon", "20ms", "--seed", "4")
    d = json.loads(out)
    assert rc == 0 and d["seed"] == 4 and d["horizon"] == 20_000
    assert {r["owner"] for r in d["records"]} <= {"wifi-a", "wifi-b", "laa-c"}


def write_bundle(tmp_path, name, scenario, capsys):
    p = tmp_path / f"{name}.json"
    assert main(["run", scenario, "--horizon", "50ms", "--replicas", "2", "--out", str(p)]) == 0
    capsys.readouterr()
    return p


def test_plotdata_single(tmp_path, capsys):
    p = write_bundle(tmp_path, "a", "three_wifi", capsys)
    rc, out, _ = run_cli(capsys, "plotdata", str(p))
    lines = out.strip().splitlines()
    assert rc == 0 and lines[0].split(",") == list(PLOT_COLUMNS)
    assert len(lines) == 4 and all(ln.startswith("three_wifi,") for ln in lines[1:])


def test_plotdata_three_groups(tmp_path, capsys):
    paths = [write_bundle(tmp_path, n, n, capsys) for n in ("three_wifi", "two_wifi_one_laa", "two_wifi_one_lteu")]
    rc, out, _ = run_cli(capsys, "plotdata", *map(str, paths))
    rows = [ln.split(",") for ln in out.strip().splitlines()[1:]]
    assert rc == 0 and len(rows) == 9
    assert [r[0] for r in rows[::3]] == ["three_wifi", "two_wifi_one_laa", "two_wifi_one_lteu"]


def test_plotdata_rejects_empty_bundle(tmp_path, capsys):
    p = write_bundle(tmp_path, "a", "three_wifi", capsys)
    d = json.loads(p.read_text())
    d["reports"] = []
    p.write_text(json.dumps(d))
    rc, out, err = run_cli(capsys, "plotdata", str(p))
    assert rc != 0 and out == "" and "no replica reports" in err
    p.write_text("{not json")
    rc, _, err = run_cli(capsys, "plotdata", str(p))
    assert rc != 0 and "JSON" in err


def test_regcheck_lookup(capsys):
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "usa", "--freq", "5200")
    assert rc == 0 and "U-NII-1" in out and "30 dBm" in out and "17 dBm/MHz" in out
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "canada", "--freq", "5625")
    assert rc == 0 and "FORBIDDEN" in out and "5600-5650" in out
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "europe", "--freq", "5400")
    assert rc == 0 and "under-consideration" in out


def test_regcheck_json(capsys):
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "Europe", "--freq", "5500", "--json")
    d = json.loads(out)
    assert rc == 0 and d["power_limit"] == 30.0 and d["dfs"] is True and d["forbidden_here"] is False


def test_regcheck_errors(capsys):
    rc, out, err = run_cli(capsys, "regcheck", "--region", "usa", "--freq", "6000")
    assert rc != 0 and out == "" and "6000" in err
    rc, _, err = run_cli(capsys, "regcheck", "--region", "mars", "--freq", "5200")
    assert rc != 0 and "mars" in err
    rc, _, err = run_cli(capsys, "regcheck", "--region", "usa")
    assert rc != 0 and "--freq" in err


def test_regcheck_device(tmp_path, capsys):
    p = tmp_path / "dev.toml"
    p.write_text('tx_power = 30.0\npsd = 10.0\nlocation = "indoor"\nimplements_tpc = true\n'
                 'implements_dfs = true\nimplements_lbt = true\noperating_band = [5180, 5240]\n')
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "europe", "--device", str(p), "--json")
    verdicts = {v["constraint"]: v["outcome"] for v in json.loads(out)["verdicts"]}
    assert rc == 0 and verdicts["power"] == "fail" and verdicts["lbt"] == "pass"
    rc, out, _ = run_cli(capsys, "regcheck", "--region", "europe", "--device", str(p))
    assert "FAIL" in out


def test_scenarios_listing(capsys):
    rc, out, _ = run_cli(capsys, "scenarios")
    assert rc == 0 and out.split() == ["three_wifi", "two_wifi_one_laa", "two_wifi_one_lteu"]


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "coexsim" in capsys.readouterr().out
