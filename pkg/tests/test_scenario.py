from pathlib import Path

import pytest
import yaml

from vdba.scenario import OUT_DIR_ENV, ParseError, ValidationError, load_scenario, scenario_from_dict

ROOT = Path(__file__).resolve().parents[1]


def minimal():
    return yaml.safe_load((ROOT / "scenarios" / "minimal.yaml").read_text())


def test_minimal_loads():
    sc = load_scenario(ROOT / "scenarios" / "minimal.yaml")
    assert (len(sc.slices), len(sc.onus), sc.frames) == (1, 1, 100)


def test_replica_loads():
    sc = load_scenario(ROOT / "scenarios" / "two_vno_32_onu.yaml")
    assert len(sc.slices) == 2 and len(sc.onus) == 32 and sc.frames == 30_000
    assert {s.algorithm for s in sc.slices} == {"fixed_low_latency", "status_reporting"}


def test_overlapping_alloc_named():
    raw = minimal()
    raw["slices"].append({"id": "other", "share_words": 10, "allocs": [{"alloc_id": 1, "onu_id": 0}]})
    with pytest.raises(ValidationError) as e:
        scenario_from_dict(raw)
    assert any("alloc_id 1" in err and "slices[1].allocs[0]" in err for err in e.value.errors)


def test_all_errors_reported_with_paths():
    raw = minimal()
    raw["frames"] = -1
    raw["merge"] = {"guard_words": "x"}
    raw["slices"][0]["algorithm"] = "mystery"
    raw["onus"][0]["allocs"][0]["profile"] = {"kind": "cbr", "rate_bps": -5}
    with pytest.raises(ValidationError) as e:
        scenario_from_dict(raw)
    joined = "\n".join(e.value.errors)
    for frag in ("<root>.frames", "merge.guard_words", "mystery", "onus[0].allocs[0].profile"):
        assert frag in joined


def test_unhosted_and_capacity():
    raw = minimal()
    raw["slices"][0]["share_words"] = 50_000
    raw["slices"][0]["allocs"].append({"alloc_id": 2, "onu_id": 3})
    with pytest.raises(ValidationError) as e:
        scenario_from_dict(raw)
    joined = "\n".join(e.value.errors)
    assert "not hosted" in joined


def test_parse_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("slices: [\n")
    with pytest.raises(ParseError):
        load_scenario(p)
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.yaml")
    with pytest.raises(ValidationError):
        scenario_from_dict([1, 2])


def test_output_dir_precedence(monkeypatch):
    sc = scenario_from_dict(minimal())
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert sc.resolved_output_dir() == Path("out/minimal")
    monkeypatch.setenv(OUT_DIR_ENV, "/tmp/env")
    assert sc.resolved_output_dir() == Path("/tmp/env")
    assert sc.resolved_output_dir("/tmp/flag") == Path("/tmp/flag")


def test_onu_seeds_independent_of_order():
    sc = scenario_from_dict(minimal())
    assert sc.onu_seed(0) == sc.onu_seed(0) != sc.onu_seed(1)
