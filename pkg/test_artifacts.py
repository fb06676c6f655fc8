import json
import logging
from datetime import datetime, timezone

import numpy as np
import pytest

from multihom.artifacts import RunDirectory, format_cell, to_json, verdict_line, write_csv
from multihom.errors import PreconditionError
from multihom.kinds import ThresholdSource, Verdict

NOW = datetime(2024, 3, 1, 12, 30, 5, tzinfo=timezone.utc)


@pytest.mark.parametrize("value,text", [
    (0.1, "0.1"),
    (np.float64(1 / 3), repr(1 / 3)),
    (float("nan"), "nan"),
    (float("-inf"), "-inf"),
    (True, "true"),
    (np.bool_(False), "false"),
    (np.int64(7), "7"),
    (None, ""),
    ([1, 2.5], "1;2.5"),
    (ThresholdSource.PILOT, "pilot"),
    ("laminate", "laminate"),
])
def test_format_cell(value, text):
    assert format_cell(value) == text


def test_csv_header_is_union_of_keys(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(path, [{"k": 4, "error": 0.5}, {"k": 8, "note": "x"}])
    assert path.read_bytes() == b"k,error,note\n4,0.5,\n8,,x\n"


def test_json_sorts_keys_and_converts_arrays():
    text = to_json({"b": np.arange(2), "a": np.float64(0.5), "src": ThresholdSource.THEORY})
    assert list(json.loads(text)) == ["a", "b", "src"]
    assert json.loads(text) == {"a": 0.5, "b": [0, 1], "src": "theory"}


def test_verdict_line():
    v = Verdict("slope(err)", 0.98, 0.9, ">=", ThresholdSource.THEORY)
    assert verdict_line(v).endswith("(theory) [REPORT]")
    v.evaluate()
    assert verdict_line(v) == "[slope(err)] 0.98 >= 0.9 (theory) [PASS]"


def test_run_directory_names_and_collisions(tmp_path):
    first = RunDirectory.create(tmp_path, "cell", NOW)
    second = RunDirectory.create(tmp_path, "cell", NOW)
    assert first.path.name == "cell-20240301T123005Z"
    assert second.path.name == "cell-20240301T123005Z-1"


def test_run_directory_refuses_escaping_paths(tmp_path):
    run_dir = RunDirectory.create(tmp_path, "cell", NOW)
    with pytest.raises(PreconditionError):
        run_dir.file("../outside.txt")
    assert run_dir.file("sub/inside.txt").parent.is_dir()


def test_run_log_captures_records(tmp_path):
    run_dir = RunDirectory.create(tmp_path, "cell", NOW)
    with run_dir:
        logging.getLogger("multihom.test").warning("inside the run")
    logging.getLogger("multihom.test").warning("after the run")
    log = (run_dir.path / "run.log").read_text()
    assert "inside the run" in log
    assert "after the run" not in log


def test_dump_field_writes_long_format(tmp_path):
    run_dir = RunDirectory.create(tmp_path, "solve", NOW)
    points = np.stack(np.meshgrid([0.0, 1.0], [0.0, 1.0], indexing="ij"), axis=-1)
    values = np.array([[0.0, 1.0], [2.0, 3.0]])
    path = run_dir.dump_field("u", points, values, ["u"], {"name": "u"})
    lines = path.read_text().splitlines()
    assert lines[0] == "x0,x1,u"
    assert lines[3] == "1.0,0.0,2.0"
    assert json.loads((run_dir.path / "u.json").read_text()) == {"name": "u"}
