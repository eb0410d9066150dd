import csv
import io
import json
import os
from pathlib import Path

import numpy as np
import pytest

from pid_decomp.cli import dumps, parse_config, run

GOLDEN = Path(__file__).parent / "golden"
GOLDEN_CASES = [
    ("check", "corollary"),
    ("pid", "corollary"),
    ("verify", "multinomial"),
]


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.mark.parametrize("command,name", GOLDEN_CASES)
def test_golden(configs, command, name):
    code, out, _ = invoke(command, "--config", configs / f"{name}.json")
    path = GOLDEN / f"{command}_{name}.json"
    if os.environ.get("PID_DECOMP_UPDATE_GOLDEN"):
        path.write_text(out)
    assert code == 0
    assert out == path.read_text()


class TestExitCodes:
    def test_ok(self, configs):
        code, out, _ = invoke("check", "--config", configs / "identical.json")
        assert code == 0 and json.loads(out)["direction"] == "both"

    def test_malformed_is_line_precise(self, configs):
        code, out, err = invoke("check", "--config", configs / "malformed.json")
        assert code == 1 and out == ""
        assert "malformed.json:7:" in err and "gamma_z" in err

    def test_missing_file(self, tmp_path):
        code, _, err = invoke("check", "--config", tmp_path / "absent.json")
        assert code == 1 and "absent.json" in err

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "system": "poisson",\n  "d1": 1,,\n}\n')
        code, _, err = invoke("check", "--config", p)
        assert code == 1 and "bad.json:3" in err

    def test_inconclusive_check(self, configs):
        code, out, _ = invoke("check", "--config", configs / "violating.json")
        report = json.loads(out)
        assert code == 2 and report["status"] == "inconclusive"
        assert [c["j"] for c in report["per_order"] if not c["satisfied"]] == [2]

    def test_inconclusive_pid_suggests_oracle(self, configs):
        code, out, _ = invoke("pid", "--config", configs / "violating.json")
        assert code == 2 and "oracle" in json.loads(out)["suggestion"]

    def test_nonconvergence(self, configs):
        code, out, _ = invoke("oracle", "--config", configs / "nonconvergent.json")
        assert code == 3 and json.loads(out)["converged"] is False

    def test_broken_channel_fails_certificate(self, configs, tmp_path):
        cfg = parse_config((configs / "multinomial.json").read_text(), configs / "multinomial.json")
        from pid_decomp.degradation import degradation_channel

        good = degradation_channel(cfg.system, cfg.epsilon)
        # Pass Y through unchanged: wrong output dimension for Z.
        p = tmp_path / "identity.csv"
        rows = [[" ".join(map(str, y)), " ".join(map(str, y)), "1"] for y in good.input_support]
        with open(p, "w", newline="") as fh:
            csv.writer(fh).writerows([["input", "output", "probability"], *rows])
        code, _, err = invoke("verify", "--config", configs / "multinomial.json", "--channel-in", p)
        assert code in (1, 2)
        # A channel of the right shape that scrambles outputs fails the certificate.
        scrambled = good.matrix[::-1]
        from pid_decomp.degradation import Channel

        Channel(good.input_support, good.output_support, scrambled).to_csv(tmp_path / "scrambled.csv")
        code, out, _ = invoke("verify", "--config", configs / "multinomial.json", "--channel-in", tmp_path / "scrambled.csv")
        report = json.loads(out)
        assert code == 2 and report["passed"] is False and report["channel_source"] != "constructed"


class TestCommands:
    def test_pid_identities(self, configs):
        report = json.loads(invoke("pid", "--config", configs / "corollary.json")[1])
        t = {k: v["value"] for k, v in report["terms"].items()}
        assert abs(t["ui_y"] + t["ui_z"] + t["ri"] + t["si"] - t["i_myz"]) <= 1e-9
        assert report["identities_hold"] and report["provenance"] == "closed_form"

    def test_pid_matches_oracle_assembly(self, configs):
        closed = json.loads(invoke("pid", "--config", configs / "corollary.json")[1])["terms"]
        code, out, _ = invoke("oracle", "--config", configs / "corollary.json", "--assemble-pid", "--epsilon", "1e-8")
        assert code == 0
        assembled = json.loads(out)["pid"]["terms"]
        for key in ("ui_y", "ui_z", "ri", "si"):
            assert abs(closed[key]["value"] - assembled[key]["value"]) <= 1e-3

    def test_oracle_certified_config(self, configs):
        report = json.loads(invoke("oracle", "--config", configs / "corollary.json", "--epsilon", "1e-8")[1])
        assert report["converged"] and report["ui_z"]["value"] <= 1e-4

    @pytest.mark.parametrize("method, code", [("mirror", 0), ("simplex", 1)])
    def test_oracle_method(self, configs, tmp_path, method, code):
        cfg = json.loads((configs / "corollary.json").read_text())
        cfg["oracle"] = {"method": method}
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        assert invoke("oracle", "--config", p, "--epsilon", "1e-8")[0] == code

    def test_verify_roundtrip(self, configs, tmp_path):
        ch = tmp_path / "ch.csv"
        code, out, _ = invoke("verify", "--config", configs / "desk_poisson.json", "--channel-out", ch)
        assert code == 0 and json.loads(out)["passed"]
        code, out, _ = invoke("verify", "--config", configs / "desk_poisson.json", "--channel-in", ch)
        assert code == 0 and json.loads(out)["passed"]

    def test_pmf(self, configs):
        report = json.loads(invoke("pmf", "--config", configs / "pmf.json")[1])
        assert report["closed_form"] == pytest.approx(0.099574136735727889, rel=1e-12)
        assert report["abs_difference"] <= 1e-15

    def test_out_json_and_csv(self, configs, tmp_path):
        code, out, _ = invoke("pid", "--config", configs / "corollary.json", "--out", tmp_path / "r.json")
        assert code == 0 and (tmp_path / "r.json").read_text() == out
        invoke("pid", "--config", configs / "corollary.json", "--out", tmp_path / "r.csv")
        rows = list(csv.DictReader(open(tmp_path / "r.csv")))
        assert len(rows) == 1 and float(rows[0]["ui_z"]) == 0.0

    def test_deterministic_across_threads(self, configs, monkeypatch):
        outs = set()
        for threads in ("1", "4"):
            monkeypatch.setenv("PID_DECOMP_THREADS", threads)
            outs.add(invoke("verify", "--config", configs / "desk_poisson.json")[1])
        assert len(outs) == 1


def test_dumps_is_canonical():
    text = dumps({"b": 0.1, "a": [1, np.float64(1 / 3)]})
    assert text == '{\n  "a": [\n    1,\n    0.33333333333333331\n  ],\n  "b": 0.10000000000000001\n}'
