import json
import textwrap

import numpy as np
import pytest

from iontrap.cli import main
from iontrap.config import KINDS, ConfigError, validate_config

M_PI = np.pi


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


@pytest.mark.parametrize("kind", [k for k in KINDS if k not in ("flop", "ramsey")])
def test_every_kind_runs_with_defaults(tmp_path, kind):
    code, out = run(tmp_path, kind)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"version", "kind", "seed", "config_hash", "wall_time_s"}
    assert manifest["kind"] == kind
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["scenario"] == {"kind": kind, "seed": 0}
    assert kind in resolved


def test_flop_recovers_poisson_mean(tmp_path):
    ini = write(tmp_path, "flop.ini", """
        [scenario]
        kind = flop
        seed = 2

        [flop]
        n_bar = 3.1
        """)
    code, out = run(tmp_path, "flop", "--config", str(ini))
    assert code == 0
    s = summary(out)
    assert s["fitted_n_bar"] == pytest.approx(3.1, abs=0.4)
    assert s["revival_detected"]
    header = (out / "signal.csv").read_text().splitlines()[0]
    assert header.split(",")[0] == "tau"
    assert (out / "signal.json").exists()


def test_wigner_minimum(tmp_path):
    code, out = run(tmp_path, "wigner")
    assert code == 0
    s = summary(out)
    assert s["w_min"] == pytest.approx(-2 / M_PI, abs=1e-6)
    assert s["alpha_at_min"] == [0, 0]
    lines = (out / "wigner.csv").read_text().splitlines()
    assert lines[0] == "re_alpha,im_alpha,w"
    assert len(lines) == 1 + 1 + 6 * 8


def test_ramsey_json(tmp_path):
    ini = write(tmp_path, "r.ini", """
        [scenario]
        kind = ramsey

        [ramsey]
        N = 3
        runs = 400
        """)
    code, out = run(tmp_path, "ramsey", "--config", str(ini), "--threads", "3")
    assert code == 0
    clock = json.loads((out / "clock.json").read_text())
    assert set(clock) == {"mode", "N", "T_R", "shots", "seed", "delta_omega", "stderr", "bound"}
    assert clock["delta_omega"] == pytest.approx(clock["bound"], rel=0.15)


def test_byte_identical_reruns(tmp_path):
    args = ["flop", "--seed", "7"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    for name in ("signal.csv", "populations.csv", "summary.json", "resolved_config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["config_hash"] == mb["config_hash"]
    assert main(["flop", "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "signal.csv").read_bytes() != (a / "signal.csv").read_bytes()


def test_thread_count_does_not_change_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["ramsey", "--out", str(a)]) == 0
    assert main(["ramsey", "--out", str(b), "--threads", "4"]) == 0
    assert (a / "clock.json").read_bytes() == (b / "clock.json").read_bytes()


def test_csv_precision(tmp_path):
    code, out = run(tmp_path, "cool")
    row = (out / "cooling.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "0"
    assert all(v == f"{float(v):.12g}" for v in row[1:])


class TestValidate:
    def test_missing_key_default_echoed(self, tmp_path, capsys):
        ini = write(tmp_path, "c.ini", """
            [scenario]
            kind = cool

            [cool]
            cycles = 3
            """)
        assert main(["validate", "--config", str(ini)]) == 0
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["cool"]["n_max"] == 30
        assert resolved["cool"]["cycles"] == 3
        assert resolved["coupling"]["eta"] == 0.2

    def test_eta_out_of_range(self, tmp_path, capsys):
        ini = write(tmp_path, "bad.ini", """\
            [scenario]
            kind = flop

            [coupling]
            eta = 1.5
            """)
        assert main(["validate", "--config", str(ini)]) == 2
        err = json.loads(capsys.readouterr().err)
        (e,) = err["errors"]
        assert (e["section"], e["key"], e["line"]) == ("coupling", "eta", 5)
        assert "[0.0, 1.0)" in e["message"]

    def test_negative_shots_and_unknown_key(self, tmp_path):
        ini = write(tmp_path, "bad.ini", """\
            [scenario]
            kind = flop

            [flop]
            shots = -2
            colour = red
            """)
        with pytest.raises(ConfigError) as info:
            validate_config(ini)
        keys = {(e.key, e.line) for e in info.value.errors}
        assert keys == {("shots", 5), ("colour", 6)}

    def test_wrong_type(self, tmp_path):
        ini = write(tmp_path, "bad.ini", """\
            [scenario]
            kind = cool

            [cool]
            n_max = many
            """)
        with pytest.raises(ConfigError, match="n_max"):
            validate_config(ini)

    def test_unknown_section(self, tmp_path):
        ini = write(tmp_path, "bad.ini", "[scenario]\nkind = cool\n\n[wigner]\nn_max = 3\n")
        with pytest.raises(ConfigError, match="unknown section"):
            validate_config(ini)

    def test_json_accepted(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"scenario": {"kind": "cngate", "seed": 4}, "cngate": {"n_max": 5}}))
        s = validate_config(p)
        assert s.kind == "cngate" and s.seed == 4 and s.section("cngate")["n_max"] == 5

    def test_seed_override(self, tmp_path):
        p = write(tmp_path, "c.ini", "[scenario]\nkind = cool\nseed = 3\n")
        assert validate_config(p, seed=9).seed == 9


def test_config_error_writes_record(tmp_path, capsys):
    ini = write(tmp_path, "bad.ini", "[scenario]\nkind = cool\n\n[cool]\ncycles = -1\n")
    code, out = run(tmp_path, "cool", "--config", str(ini))
    assert code == 2
    record = json.loads((out / "error.json").read_text())
    assert record["error"] == "ConfigError"
    assert record["errors"][0]["key"] == "cycles"
    assert json.loads(capsys.readouterr().err) == record


def test_runtime_error_writes_record(tmp_path):
    # a radius of 4 passes the schema but exceeds the truncation budget at n_max = 6
    ini = write(tmp_path, "w.ini", """
        [scenario]
        kind = wigner

        [wigner]
        n_max = 6
        radii = 1.0, 4.0
        """)
    code, out = run(tmp_path, "wigner", "--config", str(ini))
    assert code == 1
    record = json.loads((out / "error.json").read_text())
    assert record["kind"] == "wigner" and record["message"]


def test_threads_must_be_positive(tmp_path):
    code, out = run(tmp_path, "cool", "--threads", "0")
    assert code == 2
