import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from fieldrover.cli import main
from fieldrover.yieldkit.annotations import read_boxes, write_boxes
from fieldrover.yieldkit.boxes import BoundingBox

WORLD = "fixtures/worlds/field_small.json"
MISSION = "fixtures/missions/two_waypoints.json"


def artifact_bytes(out_dir):
    return {
        name: (Path(out_dir) / name).read_bytes()
        for name in ("telemetry.ndjson", "geotags.csv", "geotags.geojson", "summary.json")
    }


class TestRun:
    def test_run_deterministic_artifacts(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            code = main(
                ["run", "--world", WORLD, "--mission", MISSION, "--seed", "5",
                 "--out", str(out)]
            )
            assert code == 0
        assert artifact_bytes(a) == artifact_bytes(b)

    def test_different_seed_changes_artifacts(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["run", "--world", WORLD, "--mission", MISSION, "--seed", "5", "--out", str(a)])
        main(["run", "--world", WORLD, "--mission", MISSION, "--seed", "6", "--out", str(b)])
        assert artifact_bytes(a)["telemetry.ndjson"] != artifact_bytes(b)["telemetry.ndjson"]

    def test_battery_override_fails_prearm(self, tmp_path, capsys):
        code = main(
            ["run", "--world", WORLD, "--mission", MISSION, "--seed", "1",
             "--battery-v", "12.5", "--out", str(tmp_path)]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "battery" in err

    def test_missing_world_usage_error(self, tmp_path, capsys):
        code = main(
            ["run", "--world", "/nope/missing.json", "--mission", MISSION, "--seed", "1"]
        )
        assert code == 1

    def test_config_file_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"world": WORLD, "mission": MISSION, "seed": 9}))
        out = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        # flag overrides the config file value
        out2 = tmp_path / "out2"
        code = main(["run", "--config", str(cfg), "--seed", "10", "--out", str(out2)])
        assert code == 0
        assert artifact_bytes(out)["telemetry.ndjson"] != artifact_bytes(out2)["telemetry.ndjson"]


def write_eval_fixture(gt_dir, pred_dir, per_image):
    """per_image: list of (tp, fn, fp) per synthetic image."""
    gt_dir.mkdir(parents=True, exist_ok=True)
    pred_dir.mkdir(parents=True, exist_ok=True)
    for idx, (tp, fn, fp) in enumerate(per_image):
        n_gt = tp + fn
        cols = 60
        boxes = []
        for k in range(n_gt):
            r, c = divmod(k, cols)
            boxes.append(
                BoundingBox((c + 0.5) / cols, (r + 0.5) / cols, 0.6 / cols, 0.6 / cols)
            )
        preds = [
            BoundingBox(b.cx, b.cy, b.w, b.h, confidence=0.9) for b in boxes[:tp]
        ]
        for k in range(fp):
            # far row near the bottom, no overlap with any ground truth
            preds.append(
                BoundingBox((k + 0.5) / cols, 0.99, 0.5 / cols, 0.01, confidence=0.8)
            )
        write_boxes(gt_dir / f"img{idx}.txt", boxes)
        write_boxes(pred_dir / f"img{idx}.txt", preds, with_confidence=True)


class TestEval:
    def test_reported_aggregate_counts(self, tmp_path, capsys):
        # 2137 matched + 213 missed + 42 spurious, spread over 10 images
        per_image = []
        tp_left, fn_left, fp_left = 2137, 213, 42
        for i in range(10):
            tp = 214 if i < 7 else 213
            fn = 22 if i < 3 else 21
            fp = 5 if i < 2 else 4
            per_image.append((tp, fn, fp))
            tp_left -= tp
            fn_left -= fn
            fp_left -= fp
        assert (tp_left, fn_left, fp_left) == (0, 0, 0)
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        write_eval_fixture(gt_dir, pred_dir, per_image)
        out = tmp_path / "report.json"
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_dir), "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["confusion"] == {"tp": 2137, "fn": 213, "fp": 42}
        assert report["accuracy_pct"] == pytest.approx(89.34, abs=0.005)
        printed = capsys.readouterr().out
        assert "89.34%" in printed

    def test_empty_pred_dir(self, tmp_path, capsys):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        write_eval_fixture(gt_dir, pred_dir, [(0, 4, 0), (0, 3, 0)])
        out = tmp_path / "report.json"
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_dir), "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["confusion"] == {"tp": 0, "fn": 7, "fp": 0}
        assert report["accuracy_pct"] == 0.0

    def test_identical_dirs_perfect(self, tmp_path):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        write_eval_fixture(gt_dir, pred_dir, [(5, 0, 0), (3, 0, 0)])
        out = tmp_path / "report.json"
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_dir), "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["accuracy_pct"] == 100.0
        assert report["ap50"] == pytest.approx(1.0)

    def test_no_overlapping_ids(self, tmp_path, capsys):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        write_boxes(gt_dir / "a.txt", [BoundingBox(0.5, 0.5, 0.1, 0.1)])
        write_boxes(pred_dir / "b.txt", [], with_confidence=True)
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_dir)])
        assert code == 2


def make_png(path, w, h, seed):
    rng = np.random.default_rng(seed)
    Image.fromarray(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)).save(path)


class TestPrep:
    def test_tile_remaps_annotations(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        make_png(src / "cap.png", 607, 401, seed=1)
        boxes = [
            BoundingBox(0.5, 0.5, 0.4, 0.3),   # spans several tiles
            BoundingBox(0.1, 0.1, 0.05, 0.05),
        ]
        write_boxes(src / "cap.txt", boxes)
        out = tmp_path / "out"
        code = main(["prep", "--src", str(src), "--out", str(out), "--tile", "--seed", "3"])
        assert code == 0
        tiles = sorted((out / "images").glob("cap_tile*.png"))
        assert len(tiles) == 6
        from fieldrover.yieldkit.tiling import remap_boxes_to_tile, split_tiles

        total = 0
        for t_idx, tile in enumerate(split_tiles(607, 401)):
            got = read_boxes(out / "images" / f"cap_tile{t_idx}.txt")
            expected = remap_boxes_to_tile(boxes, 607, 401, tile)
            assert len(got) == len(expected)
            for g, e in zip(got, expected):
                assert g.cx == pytest.approx(e.cx, abs=1e-12)
                assert g.w == pytest.approx(e.w, abs=1e-12)
            total += len(got)
        assert total >= len(boxes)

    def test_negatives_one_crop_per_image(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        n = 145
        for i in range(n):
            make_png(src / f"im{i:03d}.png", 40, 30, seed=i)
            write_boxes(src / f"im{i:03d}.txt", [BoundingBox(0.25, 0.5, 0.5, 1.0)])
        out = tmp_path / "out"
        code = main(["prep", "--src", str(src), "--out", str(out), "--negatives"])
        assert code == 0
        crops = sorted((out / "images").glob("*_neg.png"))
        assert len(crops) == n
        for crop in crops:
            assert read_boxes(crop.with_suffix(".txt")) == []

    def test_split_deterministic(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        for i in range(20):
            make_png(src / f"im{i:03d}.png", 16, 16, seed=i)
            write_boxes(src / f"im{i:03d}.txt", [BoundingBox(0.5, 0.5, 0.2, 0.2)] * (i % 3))
        outs = []
        for name in ("o1", "o2"):
            out = tmp_path / name
            code = main(["prep", "--src", str(src), "--out", str(out), "--split", "--seed", "9"])
            assert code == 0
            outs.append(
                tuple((out / f"{part}.txt").read_text() for part in ("train", "val", "test"))
            )
        assert outs[0] == outs[1]

    def test_bad_annotation_line_reports_location(self, tmp_path, capsys):
        src = tmp_path / "src"
        src.mkdir()
        make_png(src / "im.png", 16, 16, seed=0)
        (src / "im.txt").write_text("0 0.5 0.5 nope 0.2\n")
        code = main(["prep", "--src", str(src), "--out", str(tmp_path / "o"), "--tile"])
        assert code == 2
        err = capsys.readouterr().err
        assert "im.txt:1" in err


class TestReplay:
    def test_replay_matches_run_summary(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--world", WORLD, "--mission", MISSION, "--seed", "4",
                     "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        replay_out = tmp_path / "replayed.json"
        code = main(["replay", "--log", str(out / "telemetry.ndjson"), "--world", WORLD,
                     "--out", str(replay_out)])
        assert code == 0
        replayed = json.loads(replay_out.read_text())
        for key, value in replayed.items():
            assert summary[key] == value


class TestServe:
    def test_busy_port_domain_error(self, capsys):
        import socket

        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            code = main(["serve", "--world", WORLD, "--telemetry-port", str(port),
                         "--max-sim-s", "0.1"])
            assert code == 2
            assert "cannot start service" in capsys.readouterr().err
        finally:
            blocker.close()


class TestPrepDeterminism:
    def test_augment_byte_identical_across_runs(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        for i in range(3):
            make_png(src / f"im{i}.png", 24, 18, seed=i)
            write_boxes(src / f"im{i}.txt", [BoundingBox(0.5, 0.5, 0.2, 0.2)])
        blobs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            code = main(["prep", "--src", str(src), "--out", str(out), "--augment",
                         "--seed", "31", "--augment-copies", "2"])
            assert code == 0
            blobs.append({
                p.name: p.read_bytes() for p in sorted((out / "images").iterdir())
            })
        assert blobs[0] == blobs[1]
        assert any(name.endswith("_aug1.png") for name in blobs[0])


class TestUnwritableOut:
    def test_unwritable_out_fails_at_startup(self, tmp_path, capsys, monkeypatch):
        # make the probe fail regardless of uid (root ignores mode bits)
        real_mkdir = Path.mkdir

        def deny(self, *args, **kwargs):
            if "blocked" in str(self):
                raise OSError("permission denied")
            return real_mkdir(self, *args, **kwargs)

        monkeypatch.setattr(Path, "mkdir", deny)
        code = main(["run", "--world", WORLD, "--mission", MISSION, "--seed", "1",
                     "--out", str(tmp_path / "blocked")])
        assert code == 2
        assert "not writable" in capsys.readouterr().err


class TestPrepGrid:
    def test_alternate_grid(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        make_png(src / "cap.png", 120, 240, seed=2)
        write_boxes(src / "cap.txt", [BoundingBox(0.5, 0.5, 0.2, 0.2)])
        out = tmp_path / "out"
        code = main(["prep", "--src", str(src), "--out", str(out), "--tile", "--grid", "2x3"])
        assert code == 0
        assert len(list((out / "images").glob("cap_tile*.png"))) == 6

    def test_invalid_grid_usage_error(self, tmp_path, capsys):
        src = tmp_path / "src"
        src.mkdir()
        make_png(src / "cap.png", 120, 240, seed=2)
        code = main(["prep", "--src", str(src), "--out", str(tmp_path / "o"),
                     "--tile", "--grid", "2x2"])
        assert code == 1
        assert "impossible" in capsys.readouterr().err
        code = main(["prep", "--src", str(src), "--out", str(tmp_path / "o2"),
                     "--tile", "--grid", "banana"])
        assert code == 1
