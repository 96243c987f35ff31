import math

import numpy as np
import pytest

from sonar_context.polar_image import SensorModel, load_dataset
from sonar_context.se2 import SE2
from sonar_context.simulator import (NoiseConfig, World, WorldConfig, circular_route, frame_rng,
                                     generate_dataset, integrate_odometry, make_world, render_sonar,
                                     simulate)

SHARP = NoiseConfig(speckle_weight=0.0, noise_floor=0.0, blob_sigma_px=0.0)


def one(x, y, refl=1.0):
    return World(np.array([[x, y, refl]]))


def test_empty_world_is_dark(sensor):
    img = render_sonar(World.empty(), SE2(), sensor, NoiseConfig.noiseless())
    assert not img.pixels.any()


def test_point_dead_ahead(sensor):
    img = render_sonar(one(10.0, 0.0), SE2(), sensor, SHARP)
    v, u = np.nonzero(img.pixels)
    assert (u.tolist(), v.tolist()) == ([130], [100])
    # 1 * r_ref / r, clipped to 1
    assert img.pixels[100, 130] == 1.0


def test_intensity_falls_with_range(sensor):
    img = render_sonar(one(40.0, 0.0, 0.5), SE2(), sensor, SHARP)
    assert img.pixels[400, 130] == pytest.approx(round(0.5 * 20 / 40 * 255) / 255)


def test_render_matches_independent_projection(sensor):
    rng = np.random.default_rng(99)
    half = math.radians(sensor.fov_deg) / 2
    checked = 0
    while checked < 1000:
        px, py, pyaw = rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-math.pi, math.pi)
        sx, sy = rng.uniform(-80, 80, size=2)
        dx, dy = sx - px, sy - py
        lx = math.cos(pyaw) * dx + math.sin(pyaw) * dy
        ly = -math.sin(pyaw) * dx + math.cos(pyaw) * dy
        r, th = math.hypot(lx, ly), math.atan2(ly, lx)
        fu = (th + half) * sensor.width_px / math.radians(sensor.fov_deg)
        fv = r * sensor.height_px / sensor.max_range_m
        if min(abs(fu - round(fu)), abs(fv - round(fv))) < 1e-6:
            continue   # too close to a bin edge to call
        img = render_sonar(World(np.array([[sx, sy, 1.0]]), (-100, -100, 100, 100)), SE2(px, py, pyaw),
                           sensor, SHARP)
        lit = list(zip(*np.nonzero(img.pixels)))
        if abs(th) <= half and r <= sensor.max_range_m:
            assert lit == [(int(fv), int(fu))]
        else:
            assert lit == []
        checked += 1


def test_render_deterministic(sensor):
    w = make_world(WorldConfig(half_extent_m=60, n_rocks=20, n_ridges=5))
    a = render_sonar(w, SE2(1, 2, 0.3), sensor, NoiseConfig(), frame_rng(3, 7))
    b = render_sonar(w, SE2(1, 2, 0.3), sensor, NoiseConfig(), frame_rng(3, 7))
    c = render_sonar(w, SE2(1, 2, 0.3), sensor, NoiseConfig(), frame_rng(3, 8))
    assert a == b and a != c


def test_world_deterministic_and_bounded():
    cfg = WorldConfig(half_extent_m=30, n_rocks=40, n_ridges=10, rock_radius_m=(1, 5), ridge_length_m=(10, 40))
    a, b = make_world(cfg), make_world(cfg)
    assert np.array_equal(a.scatterers, b.scatterers)
    assert np.abs(a.scatterers[:, :2]).max() <= 30
    assert not np.array_equal(a.scatterers, make_world(WorldConfig(half_extent_m=30, seed=1)).scatterers)


def test_noiseless_odometry_equals_ground_truth():
    traj = circular_route(20, 10, 1)
    gt = traj.ground_truth()
    assert integrate_odometry(gt, 0.0, 0.0, 5) == gt


def test_odometry_noise_seeded():
    gt = circular_route(20, 30, 1).ground_truth()
    a = integrate_odometry(gt, 0.02, 0.005, 1)
    assert a == integrate_odometry(gt, 0.02, 0.005, 1)
    assert a != integrate_odometry(gt, 0.02, 0.005, 2)
    assert a[0] == gt[0] and a[-1] != gt[-1]


def test_revisit_offset_in_ground_truth():
    traj = circular_route(40, 50, 2, revisit_yaw_deg=20.0, revisit_lateral_m=1.5)
    gt = traj.ground_truth()
    for k in range(50):
        rel = gt[k].between(gt[k + 50])
        assert math.degrees(rel.yaw) == pytest.approx(20.0, abs=1e-9)
        assert (rel.x, rel.y) == pytest.approx((0.0, 1.5), abs=1e-9)


def test_open_arc_has_no_revisit():
    gt = circular_route(40, 60, 1, arc_fraction=0.75).ground_truth()
    sep = [math.hypot(a.x - b.x, a.y - b.y) for i, a in enumerate(gt) for b in gt[i + 10:]]
    assert min(sep) > 5.0


def test_dataset_layout_and_bytes(tmp_path, sensor):
    world = make_world(WorldConfig(half_extent_m=60, n_rocks=30, n_ridges=5))
    traj = circular_route(20, 10, 1, sigma_trans_per_m=0.0, sigma_yaw_per_rad=0.0)
    summary = generate_dataset(world, traj, sensor, NoiseConfig(), tmp_path / "a")
    generate_dataset(world, traj, sensor, NoiseConfig(), tmp_path / "b")
    assert summary["frames"] == 10
    ds = load_dataset(tmp_path / "a")
    assert len(ds) == 10 and len(list((tmp_path / "a" / "images").glob("*.pgm"))) == 10
    assert (tmp_path / "a" / "odometry.csv").read_text() == (tmp_path / "a" / "poses.csv").read_text()
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file():
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()
    seq = simulate(world, traj, sensor, NoiseConfig())
    assert ds.image(3) == seq.images[3]
    for rec, pose in zip(ds.ground_truth, seq.ground_truth):
        assert rec.pose.isclose(pose, 1e-12)


def test_invalid_inputs():
    from sonar_context.errors import ParameterError
    with pytest.raises(ParameterError):
        World(np.array([[200.0, 0.0, 1.0]]))
    with pytest.raises(ParameterError):
        World(np.array([[0.0, 0.0, 0.0]]))
    with pytest.raises(ParameterError):
        circular_route(frames_per_lap=1)
    with pytest.raises(ParameterError):
        NoiseConfig(r_ref_m=0)
