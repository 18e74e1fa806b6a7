import csv
import re

import numpy as np
import pytest

from helpers import DATA, example_site, shipped_tariff
from touopt import analysis, cli
from touopt.bes import BatterySpec
from touopt.billing import bill_of_net_demand
from touopt.config import ConfigError, load_config, parse_config
from touopt.lp_model import build_instance
from touopt.solver import SolverConfig

ERROR_LINE = re.compile(r"^ERROR (config|input|solver|internal) \S.*$")


def config_text(tariffs=("E19TOU", "B19OpS"), battery="power_kw = 100.0\nduration_hours = 2.0", extra="", pv=50.0):
    files = ", ".join(f'"{DATA / "tariffs" / f"{t}.toml"}"' for t in tariffs)
    return f"""
[site]
load = "{DATA / 'profiles' / 'mep_load.csv'}"
pv_unit = "{DATA / 'profiles' / 'pv_unit.csv'}"
pv_capacity_kw = {pv}

[battery]
{battery}

[tariffs]
files = [{files}]

[solver]
backend = "highs"
{extra}
"""


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ----------------------------------------------------------------------


def test_example_configs_load():
    for case, pv, bpr in (("mep", 231.8, 250.0), ("mdp", 340.7, 350.0)):
        cfg = load_config(DATA / "configs" / f"{case}.toml")
        cfg.check_files()
        assert cfg.pv_capacity_kw == pv
        assert cfg.battery.power_rating_kw == bpr and cfg.battery.energy_rating_kwh == 2 * bpr
        assert len(cfg.tariff_files) == 5
        for values in cfg.sweeps.values():
            assert len(values) == 10 and values[0] == 0
        assert cfg.sweeps["pv_capacity"][-1] == pv and cfg.sweeps["bes_power@4h"][-1] == bpr


@pytest.mark.parametrize(
    "doc, match",
    [
        ({}, "load profile"),
        ({"site": {"load": "x.csv"}}, "at least one"),
        ({"site": {"load": "x.csv", "resolution": 20}, "tariffs": {"files": ["t"]}}, "resolution"),
        ({"site": {"load": "x.csv"}, "tariffs": {"files": ["t"]}, "battery": {"power_kw": 1, "energy_kwh": 1, "duration_hours": 1}}, "not both"),
        ({"site": {"load": "x.csv"}, "tariffs": {"files": ["t"]}, "battery": {"power_kw": -1}}, "battery"),
        ({"site": {"load": "x.csv"}, "tariffs": {"files": ["t"]}, "solver": {"backend": "cplex"}}, "backend"),
        ({"site": {"load": "x.csv"}, "tariffs": {"files": ["t"]}, "sweep": {"scenarios": ["bes_power@2h"]}}, "grid"),
        ({"site": {"load": "x.csv"}, "tariffs": {"files": ["t"]}, "sweep": {"scenarios": ["pv_capacity_x"], "pv_capacity": [0, 1]}}, "unknown sweep"),
        ({"site": "nope", "tariffs": {"files": ["t"]}}, "table"),
    ],
)
def test_config_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(doc)


def test_config_overrides(tmp_path):
    cfg = load_config(write_config(tmp_path, config_text()))
    assert cfg.load_profile.is_file()
    o = cfg.with_overrides(resolution=15, backend="simplex", baseline="E19TOU")
    assert (o.resolution, o.solver.backend, o.baseline) == (15, "simplex", "E19TOU")
    with pytest.raises(ConfigError):
        cfg.with_overrides(resolution=7)


def test_relative_paths_resolve_against_config_dir():
    cfg = load_config(DATA / "configs" / "mep.toml")
    assert cfg.load_profile.resolve() == (DATA / "profiles" / "mep_load.csv").resolve()


# -- validate-tariff ---------------------------------------------------------------


def test_validate_tariff_ok(capsys):
    code, out, _ = run(capsys, "validate-tariff", *sorted((DATA / "tariffs").glob("*.toml")))
    assert code == 0
    assert len(out.strip().splitlines()) == 5 and all(line.startswith("OK ") for line in out.splitlines())


def test_validate_tariff_errors(tmp_path, capsys):
    code, _, err = run(capsys, "validate-tariff", tmp_path / "missing.toml")
    assert code == cli.EXIT_CONFIG and ERROR_LINE.match(err.strip())
    bad = tmp_path / "bad.toml"
    bad.write_text((DATA / "tariffs" / "E19TOU.toml").read_text().replace('end = "21:30"', 'end = "20:30"'))
    code, _, err = run(capsys, "validate-tariff", bad)
    assert code == cli.EXIT_INPUT and ERROR_LINE.match(err.strip()) and len(err.strip().splitlines()) == 1
    broken = tmp_path / "broken.toml"
    broken.write_text("name = [")
    code, _, err = run(capsys, "validate-tariff", broken)
    assert code == cli.EXIT_INPUT


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bill"])
    assert exc.value.code == cli.EXIT_USAGE
    capsys.readouterr()


# -- bill --------------------------------------------------------------------------


def test_bill_writes_two_csvs(tmp_path, capsys):
    cfg = write_config(tmp_path, config_text(tariffs=("E19TOU",)))
    code, out, err = run(capsys, "bill", "--config", cfg, "--out", tmp_path / "out")
    assert code == 0, err
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["bill_E19TOU_dispatch.csv", "bill_E19TOU_monthly.csv"]
    monthly = rows(tmp_path / "out" / "bill_E19TOU_monthly.csv")
    assert out.startswith(f"E19TOU annual_total {monthly[-1]['total']} ")


def test_bill_zero_assets_prints_direct_bill(tmp_path, capsys):
    cfg = write_config(tmp_path, config_text(tariffs=("B19TOU",), battery="", pv=0.0))
    code, out, err = run(capsys, "bill", "--config", cfg, "--out", tmp_path / "out")
    assert code == 0, err
    printed = float(out.split()[2])
    _, site, unit = example_site("mep")
    annual = analysis.annual_bill(site, shipped_tariff("B19TOU"), BatterySpec.none(), 0.0, unit, SolverConfig("highs"))
    direct = 0.0
    for m in range(1, 13):
        inst = build_instance(site, shipped_tariff("B19TOU"), BatterySpec.none(), 2019, m, 0.0, unit)
        direct += bill_of_net_demand(inst, inst.base_kw).total
    assert abs(printed - direct) <= 1e-9 * direct
    assert printed == annual.total


def test_bill_missing_tariff_file(tmp_path, capsys):
    text = config_text().replace("E19TOU.toml", "NOPE.toml")
    code, _, err = run(capsys, "bill", "--config", write_config(tmp_path, text), "--out", tmp_path / "o")
    assert code == cli.EXIT_CONFIG
    assert ERROR_LINE.match(err.strip()) and "NOPE.toml" in err


def test_bill_missing_config(tmp_path, capsys):
    code, _, err = run(capsys, "bill", "--config", tmp_path / "none.toml", "--out", tmp_path / "o")
    assert code == cli.EXIT_CONFIG and err.startswith("ERROR config ")


def test_bill_bad_profile(tmp_path, capsys):
    load = tmp_path / "load.csv"
    load.write_text("timestamp,kw\n2019-01-01T00:00:00-08:00,1\n")
    text = config_text().replace(str(DATA / "profiles" / "mep_load.csv"), str(load))
    code, _, err = run(capsys, "bill", "--config", write_config(tmp_path, text), "--out", tmp_path / "o")
    assert code == cli.EXIT_INPUT and "missing interval" in err


def test_bill_solver_failure(tmp_path, capsys):
    text = config_text(extra="max_iterations = 1")
    code, _, err = run(capsys, "bill", "--config", write_config(tmp_path, text), "--out", tmp_path / "o", "--solver", "simplex")
    assert code == cli.EXIT_SOLVER and ERROR_LINE.match(err.strip())


def test_bill_eligibility_warning(tmp_path, capsys):
    cfg = write_config(tmp_path, config_text(tariffs=("B19OpS",), battery="power_kw = 10.0"))
    code, _, err = run(capsys, "bill", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0 and err.startswith("WARNING eligibility B19OpS")


def test_unknown_baseline(tmp_path, capsys):
    cfg = write_config(tmp_path, config_text(extra="[bva]\nbes_power = [0, 50]"))
    code, _, err = run(capsys, "bva", "--config", cfg, "--out", tmp_path / "o", "--baseline", "XYZ")
    assert code == cli.EXIT_CONFIG and "XYZ" in err


# -- sweep / bva ---------------------------------------------------------------------


def sweep_config(tmp_path, scenarios, grid="[0.0, 100.0]"):
    extra = f'[sweep]\nscenarios = {scenarios}\npv_capacity = {grid}\nbes_power = {grid}\n'
    return write_config(tmp_path, config_text(extra=extra))


def test_sweep_two_points(tmp_path, capsys):
    cfg = sweep_config(tmp_path, '["bes_power@4h"]')
    code, out, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "o", "--baseline", "E19TOU")
    assert code == 0, err
    for name in ("E19TOU", "B19OpS"):
        summary = rows(tmp_path / "o" / f"sweep_bes_power_4h_{name}.csv")
        assert len(summary) == 2
        for r in summary:
            assert float(r["ber_kwh"]) == 4 * float(r["bpr_kw"])
    base = rows(tmp_path / "o" / "sweep_bes_power_4h_E19TOU.csv")
    assert {float(r["relative"]) for r in base} == {0.0}
    rel = rows(tmp_path / "o" / "sweep_bes_power_4h_relative_E19TOU.csv")
    assert {float(r["E19TOU"]) for r in rel} == {0.0}
    monthly = rows(tmp_path / "o" / "sweep_bes_power_4h_monthly.csv")
    assert len(monthly) == 2 * 2 * 12


def test_sweep_ratio_baseline(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        config_text(extra='[sweep]\nscenarios = ["pv_capacity_no_bes"]\npv_capacity = [0.0, 100.0]\n').replace(
            "[tariffs]\n", '[tariffs]\nbaseline = "B19OpS"\nrelative_mode = "ratio"\n'
        ),
    )
    code, _, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0, err
    base = rows(tmp_path / "o" / "sweep_pv_capacity_no_bes_B19OpS.csv")
    assert {float(r["relative"]) for r in base} == {1.0}


def test_sweep_without_scenarios(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--config", write_config(tmp_path, config_text()), "--out", tmp_path / "o")
    assert code == cli.EXIT_CONFIG


def test_bva(tmp_path, capsys):
    cfg = write_config(tmp_path, config_text(extra="[bva]\nbes_power = [0.0, 100.0]\nduration_hours = 2.0"))
    code, out, err = run(capsys, "bva", "--config", cfg, "--out", tmp_path / "o", "--baseline", "E19TOU")
    assert code == 0, err
    for name in ("E19TOU", "B19OpS"):
        table = rows(tmp_path / "o" / f"bva_{name}.csv")
        assert float(table[0]["bva"]) == 0.0 and float(table[0]["bpr_kw"]) == 0.0
        assert float(table[1]["bva"]) >= 0
    base = rows(tmp_path / "o" / "bva_E19TOU.csv")
    assert {float(r["bva_relative"]) for r in base} == {0.0}
    other = rows(tmp_path / "o" / "bva_B19OpS.csv")
    expected = np.array([float(r["bva"]) for r in other]) - np.array([float(r["bva"]) for r in base])
    assert np.allclose([float(r["bva_relative"]) for r in other], expected, rtol=0, atol=1e-9)
