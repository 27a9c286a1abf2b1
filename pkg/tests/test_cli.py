import json

import numpy as np
import pytest

from hemd.cli import main
from hemd.probmap_io import load_labels, quantize, save_labels, save_sequence, write_pgm16


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def merge_dir(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "synth", "--preset", "merge", "--out", str(tmp_path / "syn"))
    assert code == 0
    return tmp_path / "syn"


def test_segment_defaults(merge_dir, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "segment", "--in", str(merge_dir / "prob"), "--out", str(tmp_path / "seg"))
    assert code == 0
    assert json.loads(out)["instances"] == [2] * 10
    report = json.loads((tmp_path / "seg" / "report.json").read_text())
    assert report["config"]["tau"] == 0.5 and report["config"]["delta"] == 0.35 and report["config"]["T"] == 10
    assert len(load_labels(tmp_path / "seg")) == 10


def test_segment_zero_iterations(merge_dir, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "segment", "--in", str(merge_dir / "prob"), "--out", str(tmp_path / "seg"),
                           "--iters", "0", "--report", str(tmp_path / "r.json"))
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["iterations"] == [] and report["selected_by_matching"] == [0] * 10
    assert json.loads(out)["instances"] == [2] * 4 + [1] * 6


def test_segment_missing_input(tmp_path, capsys):
    code, _, err = run_cli(capsys, "segment", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o"))
    assert code == 2 and "nope" in err


def test_segment_bad_flag(capsys):
    assert main(["segment", "--in", "x"]) == 2


def test_segment_dump_ilp(merge_dir, tmp_path, capsys):
    code, _, _ = run_cli(capsys, "segment", "--in", str(merge_dir / "prob"), "--out", str(tmp_path / "seg"),
                         "--dump-ilp", "--iters", "1")
    assert code == 0
    dumps = sorted((tmp_path / "seg" / "ilp").glob("*.json"))
    assert any("hemd_0003_to_0004" in d.name for d in dumps)
    prob = json.loads(next(d for d in dumps if "hemd" in d.name).read_text())
    assert prob["kind"] == "HEMD" and prob["variables"]


def test_eval_identity(merge_dir, capsys):
    code, out, _ = run_cli(capsys, "eval", "--pred", str(merge_dir / "gt"), "--gt", str(merge_dir / "gt"))
    res = json.loads(out)
    assert code == 0 and res["mean_f1"] == 1.0 and res["mean_aji"] == 1.0


def test_eval_empty_prediction(merge_dir, tmp_path, capsys):
    save_labels([np.zeros((64, 64), dtype=int)] * 10, tmp_path / "empty")
    code, out, _ = run_cli(capsys, "eval", "--pred", str(tmp_path / "empty"), "--gt", str(merge_dir / "gt"))
    assert code == 0 and json.loads(out)["mean_f1"] == 0.0


def test_eval_methods(merge_dir, capsys):
    scores = {}
    for method in ("hemd", "th05", "otsu"):
        code, out, _ = run_cli(capsys, "eval", "--pred", str(merge_dir / "prob"), "--gt", str(merge_dir / "gt"),
                               "--method", method)
        assert code == 0
        scores[method] = json.loads(out)["mean_f1"]
    assert scores["hemd"] > scores["th05"]
    assert scores["hemd"] == 1.0


def test_eval_maxvalue(tmp_path, capsys):
    fg = np.zeros((8, 8))
    fg[1:3, 1:3] = fg[5:7, 5:7] = 0.8
    bnd = np.full((8, 8), 0.1)
    bg = 1 - fg - bnd
    for name, arr in (("fg", fg), ("bnd", bnd), ("bg", bg)):
        save_sequence([quantize(arr)], tmp_path / name)
    lab = np.zeros((8, 8), dtype=int)
    lab[1:3, 1:3], lab[5:7, 5:7] = 1, 2
    save_labels([lab], tmp_path / "gt")
    code, out, _ = run_cli(capsys, "eval", "--pred", str(tmp_path / "fg"), "--gt", str(tmp_path / "gt"),
                           "--method", "maxvalue", "--boundary", str(tmp_path / "bnd"),
                           "--background", str(tmp_path / "bg"))
    assert code == 0 and json.loads(out)["mean_f1"] == 1.0
    code, _, _ = run_cli(capsys, "eval", "--pred", str(tmp_path / "fg"), "--gt", str(tmp_path / "gt"),
                         "--method", "maxvalue")
    assert code == 2


def test_eval_shape_mismatch(merge_dir, tmp_path, capsys):
    save_labels([np.zeros((5, 5), dtype=int)] * 10, tmp_path / "small")
    code, _, _ = run_cli(capsys, "eval", "--pred", str(tmp_path / "small"), "--gt", str(merge_dir / "gt"))
    assert code == 2


def _inspect(capsys, tmp_path, values):
    path = tmp_path / "frame.pgm"
    write_pgm16(path, np.round(np.asarray(values) * 65535).astype(int))
    code, out, _ = run_cli(capsys, "inspect-forest", "--in", str(path))
    assert code == 0
    return json.loads(out)


def test_inspect_chain(tmp_path, capsys):
    res = _inspect(capsys, tmp_path, [[0.9, 0.7, 0.6]])
    assert len(res["roots"]) == 1 and len(res["leaves"]) == 1 and len(res["single_path_roots"]) == 1
    assert {n["size"] for n in res["nodes"]} == {1, 2, 3}


def test_inspect_merged(merge_dir, capsys):
    code, out, _ = run_cli(capsys, "inspect-forest", "--in", str(merge_dir / "prob" / "frame_0007.pgm"))
    res = json.loads(out)
    assert len(res["roots"]) == 1 and len(res["leaves"]) == 2 and res["single_path_roots"] == []


def test_inspect_blank(tmp_path, capsys):
    res = _inspect(capsys, tmp_path, np.zeros((4, 4)))
    assert res["nodes"] == [] and res["roots"] == []


def test_inspect_bad_file(tmp_path, capsys):
    (tmp_path / "bad.pgm").write_bytes(b"garbage")
    code, _, _ = run_cli(capsys, "inspect-forest", "--in", str(tmp_path / "bad.pgm"))
    assert code == 2


def test_synth_scenario_file(tmp_path, capsys):
    scen = {"height": 30, "width": 30, "frames": 2, "cells": [{"centers": [[15, 15], [15, 16]], "radius": 6}]}
    (tmp_path / "s.json").write_text(json.dumps(scen))
    code, out, _ = run_cli(capsys, "synth", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "o"))
    assert code == 0 and json.loads(out)["gt_instances"] == [1, 1]
    (tmp_path / "bad.json").write_text(json.dumps({"height": 3}))
    code, _, _ = run_cli(capsys, "synth", "--scenario", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o2"))
    assert code == 2


def test_rawf32_segment(tmp_path, capsys):
    frames = [quantize(np.array([[0.9, 0.6, 0.8, 0.0]]))] * 2
    save_sequence(frames, tmp_path / "raw", "rawf32")
    code, out, _ = run_cli(capsys, "segment", "--in", str(tmp_path / "raw"), "--out", str(tmp_path / "o"),
                           "--format", "rawf32")
    assert code == 0 and json.loads(out)["instances"] == [1, 1]
