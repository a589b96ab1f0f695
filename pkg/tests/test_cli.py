import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from blockris.cli import (
    DETECT_HEADER,
    TRACE_HEADER,
    WSR_HEADER,
    config_from_dict,
    config_to_dict,
    fmt,
    main,
    parse_sweep,
)
from blockris.errors import InvalidParameterError
from blockris.evaluation import ScenarioConfig

SMALL = {
    "dims": {"K": 2, "M": 3, "Nt": 4, "Nr": 2, "Ni": 4},
    "crpa": {"max_iter": 25},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSweep:
    def test_inclusive_range(self):
        assert parse_sweep("0:10:5") == [0.0, 5.0, 10.0]

    def test_negative_range(self):
        assert parse_sweep("-20:10:10") == [-20.0, -10.0, 0.0, 10.0]

    def test_fractional_step(self):
        assert parse_sweep("0:1:0.1")[-1] == 1.0
        assert len(parse_sweep("0:1:0.1")) == 11

    def test_list(self):
        assert parse_sweep("1, 2.5,7") == [1.0, 2.5, 7.0]

    @pytest.mark.parametrize("bad", ["", "1:2", "0:10:0", "10:0:1", "a,b", "0:1:x"])
    def test_rejects(self, bad):
        with pytest.raises(InvalidParameterError):
            parse_sweep(bad)

    @given(st.integers(-30, 30), st.integers(0, 20), st.integers(1, 5))
    def test_grid_length(self, start, span, step):
        grid = parse_sweep(f"{start}:{start + span}:{step}")
        assert len(grid) == span // step + 1
        assert grid[0] == start


class TestConfig:
    def test_round_trip(self):
        cfg = ScenarioConfig(snr_db=7.5, alpha=0.01)
        assert config_from_dict(json.loads(json.dumps(config_to_dict(cfg)))) == cfg

    def test_unknown_field_named(self):
        with pytest.raises(InvalidParameterError, match="dims.Q"):
            config_from_dict({"dims": {"Q": 3}})

    def test_invalid_value(self):
        with pytest.raises(InvalidParameterError, match="p_block"):
            config_from_dict({"p_block": 2.0})

    def test_config_command(self, tmp_path):
        out = tmp_path / "cfg.json"
        assert main(["config", "--out", str(out)]) == 0
        assert config_from_dict(json.loads(out.read_text())) == ScenarioConfig()


class TestFormat:
    def test_ints_and_floats(self):
        assert fmt(5) == "5"
        assert fmt(0.1) == "0.1"
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(1e-20) == "1e-20"


class TestDetect:
    def test_rows_and_header(self, small_config, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["detect", "--config", small_config, "--sweep", "0:10:5", "--trials", "3", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == DETECT_HEADER
        assert [r[0] for r in rows[1:]] == ["0", "5", "10"]
        for r in rows[1:]:
            assert 0.0 <= float(r[1]) <= 1.0
            assert r[3:6] == ["3", "2", "3"]

    def test_single_trial_zero_stderr(self, small_config, tmp_path):
        out = tmp_path / "d.csv"
        main(["detect", "--config", small_config, "--sweep", "0", "--trials", "1", "--out", str(out)])
        assert read_csv(out)[1][2] == "0"

    def test_byte_identical_rerun(self, small_config, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["detect", "--config", small_config, "--sweep=-5:5:5", "--trials", "4", "--seed", "3"]
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert b"\r" not in a.read_bytes()


class TestWsr:
    def test_header_and_policies(self, small_config, tmp_path):
        out = tmp_path / "w.csv"
        code = main(
            ["wsr", "--config", small_config, "--sweep", "0,10", "--trials", "2",
             "--policies", "genie,none", "--out", str(out)]
        )
        assert code == 0
        rows = read_csv(out)
        assert rows[0] == WSR_HEADER
        assert [(r[0], r[1]) for r in rows[1:]] == [("0", "genie"), ("0", "none"), ("10", "genie"), ("10", "none")]
        for r in rows[1:]:
            assert float(r[2]) > 0
            assert r[4] == "2"

    def test_unknown_policy(self, small_config, tmp_path):
        code = main(["wsr", "--config", small_config, "--sweep", "0", "--policies", "best",
                     "--out", str(tmp_path / "w.csv")])
        assert code == 2


class TestTrace:
    def test_monotone_trace(self, small_config, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["trace", "--config", small_config, "--snr-db", "10", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == TRACE_HEADER
        body = rows[1:]
        assert [int(r[0]) for r in body] == list(range(1, len(body) + 1))
        w = [float(r[1]) for r in body]
        assert all(b >= a - 1e-9 * abs(b) for a, b in zip(w, w[1:]))


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["detect", "--config", str(tmp_path / "nope.json"), "--sweep", "0", "--out",
                     str(tmp_path / "o.csv")]) == 3

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["detect", "--config", str(p), "--sweep", "0", "--out", str(tmp_path / "o.csv")]) == 2

    def test_invalid_field(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"alpha": 5}))
        assert main(["detect", "--config", str(p), "--sweep", "0", "--out", str(tmp_path / "o.csv")]) == 2

    def test_unwritable_output(self, small_config, tmp_path):
        out = tmp_path / "missing_dir" / "o.csv"
        assert main(["detect", "--config", small_config, "--sweep", "0", "--trials", "1", "--out", str(out)]) == 3

    def test_bad_sweep(self, small_config, tmp_path):
        assert main(["detect", "--config", small_config, "--sweep", "5:0:1", "--out", str(tmp_path / "o")]) == 2

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "c.json"
        proc = subprocess.run([sys.executable, "-m", "blockris", "config", "--out", str(out)], capture_output=True)
        assert proc.returncode == 0
        assert out.exists()
