import copy
import json
import os

import numpy as np
import pytest

from markovcoord.cli import main as cli_main
from markovcoord.harness import (
    KINDS,
    ParseError,
    RecordSet,
    ValidationError,
    config_from_dict,
    config_hash,
    default_config,
    emit_report,
    load_config,
    point_seed,
    run_experiment,
)


def _simulate_raw(**overrides):
    raw = default_config("simulate")
    raw["sweep"] = {"n": [80], "num_blocks": [4], "rate": [0.0166], "eps": [0.24]}
    raw["options"]["cover_eps"] = 0.17
    raw["trials"] = 2
    raw.update(overrides)
    return raw


def test_default_configs_validate():
    for kind in KINDS:
        raw = default_config(kind)
        for key in raw["sweep"]:
            if not raw["sweep"][key]:
                raw["sweep"][key] = [2] if key == "w_size" else [40]
        if kind == "simulate":
            raw["sweep"].setdefault("num_blocks", [3])
        cfg = config_from_dict(raw)
        assert cfg.kind == kind


def test_load_config_round_trip(tmp_path):
    raw = _simulate_raw()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    cfg = load_config(str(path))
    canon = cfg.to_dict()
    # dump(load(x)) is a fixed point
    path2 = tmp_path / "cfg2.json"
    path2.write_text(json.dumps(canon))
    assert load_config(str(path2)).to_dict() == canon


def test_parse_error_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{\n  \"kind\": simulate\n}")
    with pytest.raises(ParseError, match=r":2:"):
        load_config(str(path))


def test_validation_error_names_bad_pmf_row():
    raw = _simulate_raw()
    raw["instance"]["u_pmf"] = [0.5, 0.4]  # sums to 0.9
    with pytest.raises(ValidationError) as exc:
        config_from_dict(raw)
    assert any("u_pmf" in f for f in exc.value.fields)


def test_validation_error_on_kind_and_sweep():
    raw = _simulate_raw()
    raw["kind"] = "bogus"
    with pytest.raises(ValidationError):
        config_from_dict(raw)
    raw = _simulate_raw()
    raw["sweep"].pop("rate")
    with pytest.raises(ValidationError, match="rate"):
        config_from_dict(raw)
    raw = _simulate_raw()
    raw["sweep"]["w_size"] = [2]  # not a simulate parameter
    with pytest.raises(ValidationError, match="w_size"):
        config_from_dict(raw)


def test_config_hash_stable_under_reordering():
    raw = _simulate_raw()
    cfg1 = config_from_dict(raw)
    reordered = dict(reversed(list(raw.items())))
    cfg2 = config_from_dict(reordered)
    assert config_hash(cfg1) == config_hash(cfg2)


def test_point_seeds_distinct_and_order_free():
    points = [{"n": n, "eps": e} for n in (50, 100) for e in (0.1, 0.2)]
    seeds = [point_seed(7, p, t) for p in points for t in range(3)]
    assert len(set(seeds)) == len(seeds)
    assert point_seed(7, {"eps": 0.1, "n": 50}, 0) == point_seed(
        7, {"n": 50, "eps": 0.1}, 0)


def test_run_experiment_single_row_and_determinism():
    cfg = config_from_dict(_simulate_raw(trials=1))
    rs1 = run_experiment(cfg)
    assert len(rs1.rows) == 1
    assert not rs1.has_errors
    rs2 = run_experiment(cfg)
    assert rs1.rows == rs2.rows
    assert rs1.metadata["config_hash"] == rs2.metadata["config_hash"]


@pytest.mark.filterwarnings("ignore:rate")
def test_run_experiment_error_isolation():
    # rate 0.5 at n=300 wants a 2^150-word table: that sweep point fails
    # with MemoryGuard while every other row is unaffected
    good = config_from_dict(_simulate_raw(trials=1))
    raw = _simulate_raw(trials=1)
    raw["sweep"]["rate"] = [0.0166, 0.5]
    raw["sweep"]["n"] = [80, 300]
    mixed = config_from_dict(raw)
    rs = run_experiment(mixed)
    assert rs.has_errors
    errors = [r for r in rs.rows if r["error"]]
    assert all("MemoryGuard" in r["error"] for r in errors)
    good_rows = run_experiment(good).rows
    surviving = [r for r in rs.rows
                 if not r["error"] and r["params"]["n"] == 80
                 and r["params"]["rate"] == 0.0166]
    assert surviving == good_rows


def test_region_kind_runs():
    raw = default_config("region")
    raw["sweep"] = {"w_size": [2]}
    raw["options"]["optimizer_budget"] = 5
    raw["options"]["optimizer_starts"] = 4
    cfg = config_from_dict(raw)
    rs = run_experiment(cfg)
    assert not rs.has_errors
    m = rs.rows[0]["metrics"]
    assert m["best_marginal_gap"] <= 1e-6
    assert m["best_slack"] <= m["i_channel"] + 1e-9
    assert m["candidate_slack"] == pytest.approx(m["i_channel"] - m["i_auxiliary"])


def test_typicality_audit_kind_runs():
    raw = default_config("typicality-audit")
    raw["sweep"] = {"n": [200], "eps": [0.2]}
    raw["trials"] = 20
    cfg = config_from_dict(raw)
    rs = run_experiment(cfg)
    assert not rs.has_errors
    assert all(r["metrics"]["projections_ok"] == 1 for r in rs.rows)


def test_aep_audit_kind_runs():
    raw = default_config("aep-audit")
    raw["sweep"] = {"n": [6], "eps": [0.8]}
    cfg = config_from_dict(raw)
    rs = run_experiment(cfg)
    assert not rs.has_errors
    m = rs.rows[0]["metrics"]
    assert m["exact"] == 1 and m["all_pass"] == 1


def test_packing_probe_single_codeword_never_fires():
    raw = default_config("packing-probe")
    raw["sweep"] = {"n": [100], "rate": [0.0], "eps": [0.3]}
    raw["trials"] = 10
    cfg = config_from_dict(raw)
    rs = run_experiment(cfg)
    assert all(r["metrics"]["event"] == 0 for r in rs.rows)
    assert all(r["metrics"]["m_count"] == 1 for r in rs.rows)


def test_packing_probe_wrapper_checks_kind():
    from markovcoord.harness import packing_probe

    raw = default_config("packing-probe")
    raw["sweep"] = {"n": [80], "rate": [0.02], "eps": [0.3]}
    raw["trials"] = 3
    rs = packing_probe(config_from_dict(raw))
    assert len(rs.rows) == 3
    assert all("i_channel_threshold" in r["metrics"] for r in rs.rows)
    with pytest.raises(ValueError):
        packing_probe(config_from_dict(_simulate_raw()))


def test_packing_probe_overpacked_rate_fires():
    # rate above I(X;Y|Y'): collisions near-certain at moderate blocklength
    raw = default_config("packing-probe")
    raw["sweep"] = {"n": [60], "rate": [0.24], "eps": [0.4]}
    raw["trials"] = 10
    cfg = config_from_dict(raw)
    rs = run_experiment(cfg)
    assert not rs.has_errors
    freq = np.mean([r["metrics"]["event"] for r in rs.rows])
    assert freq >= 0.9


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def test_emit_report_empty_recordset(tmp_path):
    rs = RecordSet(rows=[], metadata={"kind": "simulate", "timestamp": "x"})
    paths = emit_report(rs, str(tmp_path))
    lines = open(paths["records"]).read().splitlines()
    assert lines == ["error"]  # header only


def test_emit_report_fixed_columns_and_redeterminism(tmp_path):
    cfg = config_from_dict(_simulate_raw(trials=3))
    rs = run_experiment(cfg)
    paths = emit_report(rs, str(tmp_path / "a"))
    rows = open(paths["records"]).read().splitlines()
    ncols = rows[0].count(",")
    assert all(r.count(",") == ncols for r in rows)
    # re-emission is byte-identical apart from the summary timestamp
    paths2 = emit_report(rs, str(tmp_path / "b"))
    assert open(paths["records"], "rb").read() == open(paths2["records"], "rb").read()
    assert open(paths["long"], "rb").read() == open(paths2["long"], "rb").read()
    s1 = json.load(open(paths["summary"]))
    s2 = json.load(open(paths2["summary"]))
    s1["metadata"].pop("timestamp")
    s2["metadata"].pop("timestamp")
    assert s1 == s2


def test_emit_report_twelve_significant_digits(tmp_path):
    rs = RecordSet(
        rows=[{"params": {"n": 1, "trial": 0, "seed": 1},
               "metrics": {"value": 1.0 / 3.0}, "error": ""}],
        metadata={"timestamp": "t"})
    paths = emit_report(rs, str(tmp_path))
    content = open(paths["records"]).read()
    assert "0.333333333333" in content


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_print_defaults(capsys):
    assert cli_main(["simulate", "--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out)["kind"] == "simulate"


@pytest.mark.filterwarnings("ignore:rate")
def test_cli_exit_codes(tmp_path, capsys):
    # config failure -> 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli_main(["simulate", "--config", str(bad)]) == 2

    raw = _simulate_raw(trials=1)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(raw))
    out = tmp_path / "out"
    assert cli_main(["simulate", "--config", str(good), "--out", str(out)]) == 0
    assert (out / "records.csv").exists()

    # kind mismatch between file and subcommand -> 2
    assert cli_main(["region", "--config", str(good)]) == 2

    # an error row -> 1
    raw_err = _simulate_raw(trials=1)
    raw_err["sweep"]["rate"] = [0.5]
    raw_err["sweep"]["n"] = [300]
    err_cfg = tmp_path / "err.json"
    err_cfg.write_text(json.dumps(raw_err))
    assert cli_main(["simulate", "--config", str(err_cfg),
                     "--out", str(tmp_path / "out2")]) == 1
    capsys.readouterr()


def test_cli_seed_and_trials_override(tmp_path):
    raw = _simulate_raw(trials=1)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert cli_main(["simulate", "--config", str(path), "--out", str(out1),
                     "--trials", "2", "--seed", "99"]) == 0
    rows = open(out1 / "records.csv").read().splitlines()
    assert len(rows) == 3  # header + 2 trials
    assert cli_main(["simulate", "--config", str(path), "--out", str(out2),
                     "--trials", "2", "--seed", "99"]) == 0
    assert open(out1 / "records.csv").read() == open(out2 / "records.csv").read()
