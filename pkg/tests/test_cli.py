import json

import pytest

from mocaflow.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "scenes"), "--scenes", "3", "--seed", "2"]) == 0
    assert main(["build-db", "--scenes", str(root / "scenes"), "--out", str(root / "db")]) == 0
    return root


def test_synth_object_counts(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path), "--scenes", "1", "--objects", "car=2",
               "--image-size", "400x150"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out) == {"out": str(tmp_path), "scenes": 1}
    assert len((tmp_path / "label_2" / "000000.txt").read_text().splitlines()) == 2


def test_build_db_manifest(workspace):
    manifest = json.loads((workspace / "db" / "manifest.json").read_text())
    assert sum(manifest["counts"].values()) == len(manifest["records"]) > 0


def test_augment_verify_render(workspace, capsys):
    out = workspace / "aug"
    rc = main(["augment", "--scenes", str(workspace / "scenes"), "--db", str(workspace / "db"),
               "--out", str(out), "--seed", "5", "--thresholds", "0,0.3",
               "--quota", "car=4,pedestrian=2,cyclist=2", "--blend", "feather:1"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["scenes"] == 3 and summary["failed"] == []
    stats = json.loads((out / "stats.json").read_text())
    assert stats["config"]["thresholds"] == [0.0, 0.3]
    assert set(stats["per_threshold"]) <= {"0.0", "0.3"}

    assert main(["verify", "--scene", str(out / "000001")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["max_error"] < 1e-6

    png = workspace / "view.png"
    assert main(["render", "--scene", str(out / "000001"), "--view", "bev", "--out", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_augment_config_file(workspace, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 9, "thresholds": [0.5], "batch_iof": True}))
    rc = main(["augment", "--scenes", str(workspace / "scenes"), "--db", str(workspace / "db"),
               "--out", str(tmp_path / "o"), "--config", str(cfg), "--seed", "3"])
    assert rc == 0
    stats = json.loads((tmp_path / "o" / "stats.json").read_text())
    assert stats["config"]["seed"] == 3 and stats["config"]["batch_iof"] is True


def test_bad_config_exit_2(workspace, tmp_path):
    common = ["augment", "--scenes", str(workspace / "scenes"), "--db", str(workspace / "db"),
              "--out", str(tmp_path / "o")]
    assert main(common + ["--thresholds", "1.5"]) == 2
    (tmp_path / "c.json").write_text('{"seeed": 1}')
    assert main(common + ["--config", str(tmp_path / "c.json")]) == 2
    (tmp_path / "d.json").write_text("{not json")
    assert main(common + ["--config", str(tmp_path / "d.json")]) == 2


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["augment", "--scenes", "x"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["synth", "--out", "x", "--scenes", "1", "--objects", "car"])
    assert info.value.code == 2


def test_failed_scene_exit_1(workspace, tmp_path):
    import shutil

    scenes = tmp_path / "scenes"
    shutil.copytree(workspace / "scenes", scenes)
    (scenes / "velodyne" / "000001.bin").write_bytes(b"\0" * 10)
    rc = main(["augment", "--scenes", str(scenes), "--db", str(workspace / "db"),
               "--out", str(tmp_path / "o")])
    assert rc == 1
    stats = json.loads((tmp_path / "o" / "stats.json").read_text())
    assert stats["failed"] == ["000001"]


def test_verify_failure_exit_1(workspace, tmp_path, capsys):
    import shutil

    assert main(["augment", "--scenes", str(workspace / "scenes"), "--db", str(workspace / "db"),
                 "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    shutil.copytree(tmp_path / "o" / "000000", tmp_path / "s")
    flow = json.loads((tmp_path / "s" / "flow.json").read_text())
    flow["image_flow"].append({"kind": "Pad", "params": {"left": 3, "top": 0}})
    (tmp_path / "s" / "flow.json").write_text(json.dumps(flow))
    assert main(["verify", "--scene", str(tmp_path / "s")]) == 1
    assert main(["verify", "--scene", str(tmp_path / "missing")]) == 1


def test_bench_writes_report(tmp_path):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({"scenes": 2, "workers": [1], "point_counts": [1000, 2000], "repeats": 1}))
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["correspond"]["point_counts"] == [1000, 2000]
