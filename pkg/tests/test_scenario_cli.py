import csv
import json
import math

import numpy as np
import pytest
import yaml

from pricebands.cli import main, run_pipeline, run_price, run_validate
from pricebands.errors import ConfigurationError
from pricebands.scenario import dump_scenario, load_scenario, parse_scenario, scenario_to_dict

from .conftest import SCENARIOS


def case_doc(T=300, N=5):
    doc = yaml.safe_load((SCENARIOS / "case_study.yaml").read_text())
    doc["plan"].update(T=T, N=N)
    return doc


def write(tmp_path, doc, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestScenarioParsing:
    @pytest.mark.parametrize("name", ["case_study.yaml", "point_estimate.yaml", "pipeline.yaml"])
    def test_round_trip(self, name):
        sc = load_scenario(SCENARIOS / name)
        again = parse_scenario(yaml.safe_load(dump_scenario(sc)))
        assert again == sc
        assert scenario_to_dict(again) == scenario_to_dict(sc)

    def test_case_study_values(self):
        sc = load_scenario(SCENARIOS / "case_study.yaml")
        assert sc.prior.b0 == 3.9e-5
        assert sc.deal.volume_mb == 5 * 1024**3
        assert sc.plan.T == 5000 and sc.plan.N == 10

    def test_anchor_year(self):
        sc = load_scenario(SCENARIOS / "pipeline.yaml")
        assert sc.prior.b0 == pytest.approx(3.2264e-5, rel=1e-3)
        assert sc.anchor_is_projection is True

    def test_both_anchor_forms_rejected(self):
        doc = case_doc()
        doc["anchor"]["year"] = 2026
        with pytest.raises(ConfigurationError, match="exactly one") as info:
            parse_scenario(doc)
        assert info.value.section == "anchor"

    def test_no_anchor_rejected(self):
        doc = case_doc()
        doc["anchor"] = {}
        with pytest.raises(ConfigurationError):
            parse_scenario(doc)

    def test_unknown_key_rejected(self):
        doc = case_doc()
        doc["prior"]["s_beta"] = 0.1
        with pytest.raises(ConfigurationError, match="s_beta"):
            parse_scenario(doc)

    def test_unknown_node_names_field(self):
        doc = case_doc()
        doc["deal"]["technology_node"] = "1nm"
        with pytest.raises(ConfigurationError, match="technology_node"):
            parse_scenario(doc)

    def test_bad_quality_names_field(self):
        doc = case_doc()
        doc["deal"]["quality_score"] = 1.7
        with pytest.raises(ConfigurationError) as info:
            parse_scenario(doc)
        assert info.value.field == "quality_score"

    def test_volume_in_mb(self):
        doc = case_doc()
        doc["deal"].pop("volume")
        doc["deal"]["volume_mb"] = 1234.0
        assert parse_scenario(doc).deal.volume_mb == 1234.0

    def test_with_seed(self):
        sc = load_scenario(SCENARIOS / "case_study.yaml").with_seed(5)
        assert sc.plan.seed == 5


class TestRunners:
    def test_point_estimate_report(self):
        report = run_price(load_scenario(SCENARIOS / "point_estimate.yaml"), timestamp=False)
        assert report["bands"]["usd_per_mb"]["P50"] == pytest.approx(3.49e-4, rel=5e-3)

    def test_neutral_scenario(self, tmp_path):
        doc = case_doc(T=3, N=2)
        doc["deal"].update(node_table={"legacy": 1.0}, technology_node="legacy", process_count=0,
                           quality_score=0.25, completeness_score=0.25, age_months=0, utility_value_usd=0,
                           rights_factors=[], check_node_monotone=False)
        doc["deal"]["formulas"]["qf_weights"] = [0.9, 0.2, 0.2, 0.0]
        doc["prior"].update(s_alpha=0, s=[0] * 5, s_sigma=0, mu=[2.0, -1.0, 0.5, 3.0, 1.0])
        doc["constraints"]["beta_bounds"] = [-5, 5]
        report = run_price(parse_scenario(doc), timestamp=False)
        for v in report["bands"]["usd_per_mb"].values():
            assert v == pytest.approx(3.9e-5, rel=1e-12)

    def test_totals_from_reported_band(self):
        report = run_price(parse_scenario(case_doc()), timestamp=False)
        b = report["bands"]
        for k, v in b["usd_per_mb"].items():
            assert b["contract_total_usd"][k] == v * b["volume_mb"]
            assert b["usd_per_gb"][k] == v * 1024

    def test_report_stable(self):
        sc = parse_scenario(case_doc())
        a = json.dumps(run_price(sc, timestamp=False), sort_keys=True)
        b = json.dumps(run_price(sc, timestamp=False, workers=3), sort_keys=True)
        assert a == b

    def test_degenerate_pipeline_equals_price(self):
        doc = case_doc()
        doc["pipeline"] = {"components": [{"weight": 1.0, "fields": {}}]}
        sc = parse_scenario(doc)
        price = run_price(sc, timestamp=False)
        pipe = run_pipeline(sc, timestamp=False)
        assert pipe["bands"]["usd_per_mb_unrounded"] == price["bands"]["usd_per_mb_unrounded"]

    def test_class_fixing_deal_equals_single(self):
        doc = case_doc()
        doc["pipeline"] = {
            "components": [{"weight": 0.5, "fields": {}},
                           {"weight": 0.5, "fields": {"technology_node": "5nm", "process_count": 2}}],
            "classes": [{"label": "case deal", "where": [{"field": "technology_node", "value": "3nm"}]}],
        }
        sc = parse_scenario(doc)
        single = run_price(sc, timestamp=False)
        pipe = run_pipeline(sc, timestamp=False)
        assert pipe["class_bands"]["case deal"]["usd_per_mb_unrounded"] == single["bands"]["usd_per_mb_unrounded"]
        assert pipe["bands"]["usd_per_mb"]["P5"] < single["bands"]["usd_per_mb"]["P5"]

    def test_pipeline_two_point_ratio(self):
        doc = case_doc(T=200, N=10)
        doc["prior"].update(s_alpha=0, s=[0] * 5, s_sigma=0)
        doc["pipeline"] = {"components": [
            {"weight": 0.5, "fields": {"rights_factors": [{"label": "base", "factor": 1.0}]}},
            {"weight": 0.5, "fields": {"rights_factors": [{"label": "double", "factor": 2.0}]}},
        ]}
        bands = run_pipeline(parse_scenario(doc), timestamp=False)["bands"]["usd_per_mb_unrounded"]
        assert bands["P95"] / bands["P5"] == pytest.approx(math.exp(1.16 * math.log(2)), rel=1e-12)

    def test_validate_case_study(self):
        report = run_validate(load_scenario(SCENARIOS / "case_study.yaml"))
        x = report["inputs"]["multipliers"]
        assert [round(x[k], 5) for k in ("TN", "COV", "QF", "UTIL", "RIGHTS")] == [1.65, 1.29189, 1.21, 1.56599,
                                                                                  1.6445]
        assert report["warnings"] == []
        assert report["checks"]["semi_analytic_median_usd_per_mb"] == pytest.approx(3.49e-4, rel=5e-3)

    def test_validate_near_empty_region(self):
        doc = case_doc()
        doc["constraints"]["beta_bounds"] = [0, 0.0001]
        report = run_validate(parse_scenario(doc))
        assert report["acceptance_probe"]["rate"] == 0.0
        assert any("conflict" in w for w in report["warnings"])


class TestMain:
    def test_price_text(self, capsys):
        code, out, _ = run_cli(capsys, "price", "--scenario", SCENARIOS / "point_estimate.yaml", "--no-timestamp")
        assert code == 0
        assert "P50" in out and "3.4900e-04" in out

    def test_json_bytes_stable(self, tmp_path, capsys):
        path = write(tmp_path, case_doc())
        outs = [run_cli(capsys, "price", "--scenario", path, "--json", "--no-timestamp", "--workers", w)[1]
                for w in (1, 4, 1)]
        assert outs[0] == outs[1] == outs[2]
        assert "generated_at" not in outs[0]

    def test_timestamp_present_by_default(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "price", "--scenario", write(tmp_path, case_doc(T=10)), "--json")
        assert code == 0
        assert "generated_at" in json.loads(out)["timing"]

    def test_seed_override(self, tmp_path, capsys):
        path = write(tmp_path, case_doc(T=50))
        a = json.loads(run_cli(capsys, "price", "--scenario", path, "--json", "--no-timestamp", "--seed", 1)[1])
        b = json.loads(run_cli(capsys, "price", "--scenario", path, "--json", "--no-timestamp", "--seed", 2)[1])
        assert a["seed"] == 1 and b["seed"] == 2
        assert a["bands"] != b["bands"]

    def test_samples_csv(self, tmp_path, capsys):
        path = write(tmp_path, case_doc(T=4, N=3))
        out_csv = tmp_path / "samples.csv"
        code, _, _ = run_cli(capsys, "price", "--scenario", path, "--samples-out", out_csv, "--no-timestamp")
        assert code == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert len(rows) == 12
        assert {"t", "i", "price_usd_per_mb", "alpha", "beta_TN", "sigma"} <= set(rows[0])
        assert all(float(r["price_usd_per_mb"]) > 0 for r in rows)

    def test_validation_error_exit_2(self, tmp_path, capsys):
        doc = case_doc()
        doc["deal"]["technology_node"] = "1nm"
        code, _, err = run_cli(capsys, "price", "--scenario", write(tmp_path, doc))
        assert code == 2
        assert "technology_node" in err

    def test_conflict_exit_3(self, tmp_path, capsys):
        doc = case_doc(T=2, N=1)
        doc["constraints"]["beta_bounds"] = [0, 0.0001]
        doc["plan"]["max_attempts"] = 200
        code, _, err = run_cli(capsys, "price", "--scenario", write(tmp_path, doc))
        assert code == 3
        assert "beta_" in err

    def test_io_error_exit_4(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "price", "--scenario", tmp_path / "missing.yaml")
        assert code == 4

    def test_malformed_yaml(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("plan: [unclosed\n")
        code, _, _ = run_cli(capsys, "price", "--scenario", path)
        assert code in (2, 4)

    def test_validate_command_warns(self, tmp_path, capsys):
        doc = case_doc()
        doc["constraints"]["beta_bounds"] = [0, 0.0001]
        code, out, _ = run_cli(capsys, "validate", "--scenario", write(tmp_path, doc))
        assert code == 0
        assert "conflict" in out

    def test_anchor_command(self, capsys):
        code, out, _ = run_cli(capsys, "anchor", "--year", 2026, "--json")
        data = json.loads(out)
        assert code == 0
        assert data["b0_usd_per_mb"] == pytest.approx(3.22e-5, rel=0.01)
        assert data["is_projection"] is True

    def test_anchor_missing_year(self, capsys):
        code, _, err = run_cli(capsys, "anchor", "--year", 2040)
        assert code == 2

    def test_calibrate_writes_scenario(self, tmp_path, capsys):
        out_path = tmp_path / "refreshed.yaml"
        code, out, _ = run_cli(capsys, "calibrate", "--deals", SCENARIOS / "observed_deals.yaml",
                               "--scenario", SCENARIOS / "case_study.yaml", "--write-scenario", out_path, "--json")
        assert code == 0
        data = json.loads(out)
        assert data["blend_weight"] == pytest.approx(10 / 30)
        refreshed = load_scenario(out_path)
        assert refreshed.prior.mu == pytest.approx(tuple(data["refreshed_prior"]["mu"]))

    def test_pipeline_command(self, tmp_path, capsys):
        doc = yaml.safe_load((SCENARIOS / "pipeline.yaml").read_text())
        doc["plan"].update(T=100, N=4)
        code, out, _ = run_cli(capsys, "pipeline", "--scenario", write(tmp_path, doc), "--json", "--no-timestamp")
        data = json.loads(out)
        assert code == 0
        assert set(data["class_bands"]) == {"3nm", "5nm with derivatives"}
        p = data["bands"]["usd_per_mb"]
        assert p["P5"] <= p["P50"] <= p["P95"]

    def test_pipeline_without_section(self, capsys):
        code, _, err = run_cli(capsys, "pipeline", "--scenario", SCENARIOS / "point_estimate.yaml")
        assert code == 2 and "pipeline" in err


def test_samples_array_matches_csv_order(tmp_path):
    sc = parse_scenario(case_doc(T=3, N=2))
    out_csv = tmp_path / "s.csv"
    run_price(sc, timestamp=False, samples_out=out_csv)
    rows = list(csv.DictReader(out_csv.open()))
    assert [(int(r["t"]), int(r["i"])) for r in rows] == [(t, i) for t in range(3) for i in range(2)]
    assert np.all(np.diff([float(r["alpha"]) for r in rows])[::2] == 0)
