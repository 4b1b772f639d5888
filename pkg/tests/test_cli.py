import json

import pytest

from posevolume.cli import main


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def synth_dir(tmp_path):
    cfg = _write(tmp_path / "synth.json", {"n_scenes": 2, "engine": {
        "schedule": {"initial_space": {"rot_counts": [3, 1, 1], "trans_counts": [3, 1, 3]}, "iterations": 3}}})
    assert main(["synth", cfg, "--seed", "4", "--out", str(tmp_path / "scenes")]) == 0
    return tmp_path / "scenes"


def test_synth_outputs(synth_dir):
    names = sorted(p.name for p in synth_dir.iterdir())
    assert names == [f"scene_000{i}.{ext}" for i in range(2) for ext in ("feat", "json", "xyz")]


def test_register_exit_zero_and_deterministic(synth_dir, tmp_path):
    cfg = str(synth_dir / "scene_0000.json")
    assert main(["register", cfg, "--out", str(tmp_path / "a.json")]) == 0
    assert main(["register", cfg, "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["iterations_run"] == 3


def test_register_no_overlap_exit_3(tmp_path):
    (tmp_path / "c.xyz").write_text("0 0 -5\n1 0 -6\n")
    from posevolume.features import FeatureBundle, save_bundle
    import numpy as np
    save_bundle(tmp_path / "c.feat", FeatureBundle(np.zeros((4, 4, 4)), np.ones((2, 4)), np.ones((4, 4)), np.ones(2)))
    cfg = _write(tmp_path / "r.json", {"cloud": "c.xyz", "features": "c.feat",
                                       "intrinsics": {"fx": 4, "fy": 4, "cx": 2, "cy": 2, "width": 4, "height": 4},
                                       "engine": {"schedule": {"iterations": 2, "initial_space": {
                                           "rot_range": [0, 0, 0], "trans_range": [0, 0, 0],
                                           "rot_counts": [1, 1, 1], "trans_counts": [1, 1, 1]}}}})
    assert main(["register", cfg, "--out", str(tmp_path / "out.json")]) == 3
    assert json.loads((tmp_path / "out.json").read_text())["error"] == "no_overlap"


@pytest.mark.parametrize("cmd,cfg", [
    ("synth", {"n_scenes": 1, "bogus": 1}),
    ("synth", {"scene": {"extent": 0}}),
    ("bench", {"n_scenes": 0}),
    ("register", {"cloud": "missing.xyz"}),
    ("grad-check", {"checks": ["nope"]}),
    ("train-scorer", {"optimizer": "rmsprop"}),
])
def test_config_errors_exit_2(tmp_path, cmd, cfg):
    path = _write(tmp_path / "bad.json", cfg)
    assert main([cmd, path, "--out", str(tmp_path / "out")]) == 2


def test_unreadable_config_exit_2(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    assert main(["bench", str(tmp_path / "x.json"), "--out", str(tmp_path / "o")]) == 2
    assert main(["bench", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_grad_check_command(tmp_path):
    cfg = _write(tmp_path / "g.json", {"points": 2})
    assert main(["grad-check", cfg, "--seed", "1", "--out", str(tmp_path / "g.out.json")]) == 0
    doc = json.loads((tmp_path / "g.out.json").read_text())
    assert doc["passed"] is True and set(doc["worst"]) == {"circle", "circle_full", "focal", "cross_entropy", "scorer"}


def test_preprocess_command(tmp_path):
    (tmp_path / "c.xyz").write_text("0.01 0.01 0.01\n0.06 0.01 0.01\n3 3 3\n")
    cfg = _write(tmp_path / "p.json", {"cloud": "c.xyz"})
    assert main(["preprocess", cfg, "--out", str(tmp_path / "o.xyz")]) == 0
    assert len((tmp_path / "o.xyz").read_text().splitlines()) == 2
