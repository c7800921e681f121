import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from isrm.grid import Action, Pose, compose_pose, map_to_bytes
from isrm.projection import ray_bearings
from isrm.simulator.episode import EpisodeConfig, random_start, run_episode, write_trajectory_csv
from isrm.simulator.floorplan import (
    NO_REGION, FloorplanConfig, InfeasibleFloorplan, floorplan_from_text, floorplan_to_text, generate_floorplan,
    load_floorplan, save_floorplan,
)
from isrm.simulator.sensor import NoiseModel, PoseInObstacle, sense

from oracles import raycast_segments


def one_room(seed=0):
    return generate_floorplan(FloorplanConfig(extent=(4.0, 4.0), min_room=2.0, max_room=4.0, split_prob=0.0,
                                              seed=seed))


# -- floorplans -------------------------------------------------------------------------


def test_forced_single_split():
    fp = generate_floorplan(FloorplanConfig(extent=(4.0, 2.0), min_room=2.0, max_room=2.0, seed=5))
    assert len(fp.rooms) == 2 and len(fp.doors) == 1
    assert fp.is_connected()


def test_same_seed_same_floorplan():
    cfg = FloorplanConfig(seed=11)
    assert generate_floorplan(cfg) == generate_floorplan(cfg)
    assert generate_floorplan(cfg) != generate_floorplan(FloorplanConfig(seed=12))


def test_infeasible_config():
    with pytest.raises(InfeasibleFloorplan):
        generate_floorplan(FloorplanConfig(extent=(3.0, 3.0), min_room=2.0))
    with pytest.raises(InfeasibleFloorplan):
        generate_floorplan(FloorplanConfig(extent=(6.0, 6.0), min_rooms=50, max_retries=3))


def test_hundred_seeds_connected_and_labeled():
    for seed in range(100):
        fp = generate_floorplan(FloorplanConfig(extent=(8.0, 8.0), seed=seed))
        free = fp.free
        # flood fill from any free cell reaches all of them
        start = tuple(np.argwhere(free)[0])
        lab, _ = ndimage.label(free)
        assert np.all(lab[free] == lab[start])
        assert np.all(fp.region[free] >= 0) and np.all(fp.region[free] < fp.labels.C)
        assert np.all(fp.region[~free] == NO_REGION)
        for room in fp.rooms:
            i0, j0, i1, j1 = room.interior
            assert np.all(fp.region[i0:i1, j0:j1] == room.label)


def test_label_weights_respected():
    weights = np.zeros(14)
    weights[[3, 7]] = 1.0
    fp = generate_floorplan(FloorplanConfig(extent=(10.0, 10.0), label_weights=tuple(weights), seed=2))
    assert fp.distinct_labels() <= {3, 7}


def test_floorplan_text_round_trip(tmp_path, small_floorplan):
    assert floorplan_from_text(floorplan_to_text(small_floorplan)) == small_floorplan
    save_floorplan(small_floorplan, tmp_path / "env.txt")
    assert load_floorplan(tmp_path / "env.txt") == small_floorplan


# -- sensor -----------------------------------------------------------------------------


def test_wall_ahead_depth():
    fp = one_room()
    i0, j0, i1, j1 = fp.rooms[0].interior
    # face the wall at i = i0 - 1 from 1.0 m away
    x = i0 * fp.cell_size + 1.0
    y = (j0 + j1) / 2 * fp.cell_size + 0.01
    r = sense(fp, Pose(x, y, math.pi), width=5, hfov=0.5)
    assert abs(r.scan.depths[2] - 1.0) <= fp.cell_size / 2


def test_sense_deterministic_without_noise(small_floorplan):
    pose = random_start(small_floorplan, 0)
    a, b = sense(small_floorplan, pose), sense(small_floorplan, pose)
    assert np.array_equal(a.scan.depths, b.scan.depths) and np.array_equal(a.labels, b.labels)
    assert a.reported_pose == pose


def test_sense_in_obstacle_raises(small_floorplan):
    i, j = np.argwhere(small_floorplan.occupancy)[0]
    with pytest.raises(PoseInObstacle):
        sense(small_floorplan, Pose((i + 0.5) * 0.05, (j + 0.5) * 0.05, 0.0))


def test_depths_match_segment_oracle(small_floorplan):
    fp = small_floorplan
    rng = np.random.default_rng(0)
    free = np.argwhere(fp.free)
    worst, exact, labels_ok, total = 0.0, 0, 0, 0
    for _ in range(1000):
        i, j = free[rng.integers(len(free))]
        pose = Pose((i + rng.random()) * fp.cell_size, (j + rng.random()) * fp.cell_size, rng.uniform(-math.pi, math.pi))
        r = sense(fp, pose, width=3, hfov=1.0, max_range=4.0)
        angles = pose.theta - ray_bearings(3, 1.0)
        ref = raycast_segments(fp.occupancy, (pose.x / fp.cell_size, pose.y / fp.cell_size), angles, 4.0 / fp.cell_size)
        diff = np.abs(r.scan.depths - ref * fp.cell_size)
        worst = max(worst, diff.max())
        exact += np.count_nonzero(diff < 1e-9)
        for k, ang in enumerate(angles):
            t = ref[k] * fp.cell_size - 1e-6
            px, py = pose.x + t * math.cos(ang), pose.y + t * math.sin(ang)
            labels_ok += r.labels[k] == fp.region[int(px // fp.cell_size), int(py // fp.cell_size)]
            total += 1
    assert worst <= fp.cell_size
    assert exact >= 0.99 * total
    assert labels_ok >= 0.99 * total


def test_noise_model_effects():
    rng = np.random.default_rng(0)
    nm = NoiseModel(depth_sigma_rel=0.02, depth_dropout_p=0.0)
    d = np.full(200000, 2.0)
    noisy = nm.corrupt_depths(d, 10.0, rng)
    assert abs(noisy.std() - 0.04) < 0.001
    nm = NoiseModel(depth_sigma_rel=0.0, depth_dropout_p=0.25)
    dropped = nm.corrupt_depths(d, 10.0, rng) == 10.0
    assert abs(dropped.mean() - 0.25) < 0.01
    p = NoiseModel(pose_sigma_trans=0.01, pose_sigma_rot=0.0).corrupt_pose(Pose(1, 1, 0), rng)
    assert p.theta == 0.0 and (p.x, p.y) != (1.0, 1.0)
    with pytest.raises(ValueError):
        NoiseModel(depth_dropout_p=2.0)


# -- episodes ---------------------------------------------------------------------------


def test_zero_steps_empty_map(small_floorplan):
    res = run_episode(small_floorplan, EpisodeConfig(max_steps=0))
    assert res.log == [] and not res.global_map.obs_count.any()
    assert res.metrics.mask_empty and res.metrics.mask_acc == 0.0 and res.metrics.ovr_acc == 0.0


def test_one_room_oracle_is_exact():
    fp = one_room(seed=4)
    res = run_episode(fp, EpisodeConfig(max_steps=500, seed=1))
    assert res.error is None
    assert res.metrics.mask_acc == 1.0
    assert res.violations == 0


def test_episode_deterministic(small_floorplan):
    cfg = EpisodeConfig(max_steps=150, seed=9, noise=True, confusion_diag=0.7)
    a, b = run_episode(small_floorplan, cfg), run_episode(small_floorplan, cfg)
    assert map_to_bytes(a.global_map) == map_to_bytes(b.global_map)
    assert a.log == b.log


def test_noise_logs_true_and_estimated_pose(small_floorplan):
    res = run_episode(small_floorplan, EpisodeConfig(max_steps=50, seed=3, noise=True))
    errs = [math.hypot(r.x - r.est_x, r.y - r.est_y) for r in res.log]
    assert all(e > 0 for e in errs) and max(errs) < 0.1
    clean = run_episode(small_floorplan, EpisodeConfig(max_steps=50, seed=3))
    assert all((r.x, r.y, r.theta) == (r.est_x, r.est_y, r.est_theta) for r in clean.log)


def test_true_kinematics_follow_actions(small_floorplan):
    res = run_episode(small_floorplan, EpisodeConfig(max_steps=80, seed=4))
    for prev, nxt in zip(res.log, res.log[1:]):
        moved = compose_pose(Pose(prev.x, prev.y, prev.theta), Action(prev.action))
        if prev.collided:
            assert (nxt.x, nxt.y) == (prev.x, prev.y)
        else:
            assert (nxt.x, nxt.y) == pytest.approx((moved.x, moved.y), abs=1e-12)
        assert nxt.theta == pytest.approx(moved.theta, abs=1e-12)


def test_classifier_failure_aborts_cleanly(small_floorplan):
    calls = []

    def broken(labels, rng):
        calls.append(1)
        if len(calls) > 3:
            raise RuntimeError("boom")
        from isrm.classifier import synth_classify
        return synth_classify(labels, np.eye(14), "spatial")

    res = run_episode(small_floorplan, EpisodeConfig(max_steps=20), classifier=broken)
    assert res.error is not None and "boom" in res.error
    assert len(res.log) == 3 and res.global_map.obs_count.any()


def test_config_text_round_trip():
    cfg = EpisodeConfig(max_steps=7, fusion="bayes", noise=True, confusion_diag=0.7)
    assert EpisodeConfig.from_text(cfg.to_text()) == cfg
    assert EpisodeConfig.from_text("mode = repeated  # comment\n", seed=4).mode == "repeated"
    with pytest.raises(ValueError):
        EpisodeConfig.from_text("bogus=1\n")


def test_trajectory_csv_columns(small_floorplan):
    import io

    res = run_episode(small_floorplan, EpisodeConfig(max_steps=5))
    buf = io.StringIO()
    write_trajectory_csv(res.log, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",")[:5] == ["t", "x", "y", "theta", "action"]
    assert len(lines) == 6
    assert lines[1].split(",")[7] == "init"


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_random_start_clear_of_walls(seed):
    fp = one_room()
    p = random_start(fp, seed, clearance=0.3)
    dist = ndimage.distance_transform_edt(fp.free) * fp.cell_size
    assert dist[int(p.x // fp.cell_size), int(p.y // fp.cell_size)] >= 0.3
