from __future__ import annotations

import json
import subprocess
import sys

import pytest

from kblrt.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate(capsys, sample_path):
    code, out, _ = run(capsys, "validate", sample_path("snapchat.trace"), "--json")
    assert code == 0
    assert json.loads(out)["transitions"] == "pass"


def test_validate_unordered(capsys, tmp_path):
    path = tmp_path / "bad.trace"
    path.write_text(json.dumps({"steps": [{"time": 2, "agents": ["a"]}, {"time": 1}]}))
    code, out, _ = run(capsys, "validate", str(path))
    assert code == 2 and "not strictly increasing" in out


def test_check_exit_codes(capsys, sample_path):
    trace = sample_path("retention.trace")
    assert run(capsys, "check", trace, "--omega", "3", "--formula", "K[3, i] loc[3](alice, pub)")[0] == 0
    code, out, _ = run(capsys, "check", trace, "--omega", "2", "--formula", "K[3, i] loc[3](alice, pub)")
    assert code == 2 and out.startswith("fails")


def test_check_formulas_file_json_and_proof(capsys, sample_path, tmp_path):
    listing = tmp_path / "goals.txt"
    listing.write_text("# goals\nK[0, alice] picture[0](bob, pub)\n\nforall t . K[t, alice] picture[0](bob, pub)\n")
    code, out, _ = run(capsys, "check", sample_path("snapchat.trace"), "--omega", "10",
                       "--formulas-file", str(listing), "--json", "--show-proof")
    results = json.loads(out)
    assert code == 2
    assert results[0]["holds"] and results[0]["proof"]["rule"] == "Premise"
    assert results[1]["witness"] == {"t": 15}


def test_policy(capsys, sample_path):
    code, _, _ = run(capsys, "policy", sample_path("snapchat.trace"), "--omega", "10",
                     "--policy", sample_path("alice-weekend.ppl"))
    assert code == 0
    code, out, _ = run(capsys, "policy", sample_path("weekend-late.trace"),
                       "--policy", sample_path("weekend-ever.ppl"), "--json")
    assert code == 2
    assert json.loads(out)[0]["witness"] == {"t": 2, "t2": 3}
    inline = "policy[alice, 0] { forall t . weekend[t]() => deny K[t, bob] location[t](alice) }"
    assert run(capsys, "policy", sample_path("weekend-late.trace"), "--policy", inline)[0] == 0


def test_derive(capsys, sample_path):
    code, out, _ = run(capsys, "derive", sample_path("location-conflict.trace"), "--agent", "bob", "--at", "22:00",
                       "--goal", "B[22:00, bob] loc[20:00](alice, pub)")
    assert code == 0 and "A3" in out
    code, out, _ = run(capsys, "derive", sample_path("retention.trace"), "--agent", "i", "--at", "3",
                       "--goal", "K[3, i] loc[3](alice, pub)", "--window", "2", "--json")
    assert code == 2 and json.loads(out)["reason"] == "not-derivable"


def test_replay(capsys, sample_path):
    code, out, _ = run(capsys, "replay-beliefs", sample_path("location-conflict.trace"), "--omega", "120",
                       "--beta", "susceptible", "--explain-beliefs", "--json")
    data = json.loads(out)
    assert code == 0
    assert "K[1320, bob] B[1320, bob] loc[1200](alice, pub)" in data["ekbs"]["1320"]["bob"]
    assert data["reports"][-1]["candidates"][0]["admitted"]


@pytest.mark.parametrize("argv, code, fragment", [
    (["check", "missing.trace", "--formula", "p[0]()"], 1, "error"),
    (["check", "{ret}", "--formula", "K[3, i"], 1, "expected"),
    (["check", "{ret}", "--formula", "K[9, i] p[0]()"], 2, "not in the trace"),
    (["check", "{ret}", "--formula", "K[3, zed] p[0]()"], 2, "unknown agent"),
    (["check", "{ret}"], 2, "nothing to check"),
])
def test_errors(capsys, sample_path, argv, code, fragment):
    argv = [a.replace("{ret}", sample_path("retention.trace")) for a in argv]
    got, _, err = run(capsys, *argv)
    assert got == code
    assert fragment in err


def test_console_entry_point(sample_path):
    proc = subprocess.run([sys.executable, "-m", "kblrt.cli", "validate", sample_path("retention.trace")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "well-formed: yes" in proc.stdout
