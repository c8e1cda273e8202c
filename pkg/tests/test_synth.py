import json
import math

import numpy as np
import pytest

from sinoplace.descriptor import make_descriptor
from sinoplace.errors import ParameterError
from sinoplace.ingest import load_poses, load_scan
from sinoplace.matcher import similarity_distance
from sinoplace.radon import radon_transform
from sinoplace.synth import (NoiseSpec, Scatterer, ScanGeometry, SceneSpec, figure_eight, frame_rng,
                             make_trajectory_dataset, random_scene, render_polar, square_loop)
from sinoplace.warp import GridSpec, backward_warp

GEO = ScanGeometry(400, 500, 0.2)


def test_empty_scene_is_zero():
    assert not render_polar(SceneSpec(0), (0, 0, 0), GEO).intensities.any()


def test_scatterer_dead_ahead():
    scene = SceneSpec(0, (Scatterer(50.0, 0.0, 1.0, 1.0),))
    scan = render_polar(scene, (0, 0, 0), GEO)
    k, b = np.unravel_index(np.argmax(scan.intensities), scan.intensities.shape)
    assert k == 0
    assert b == round(50 / GEO.range_resolution)


def test_scatterer_to_the_left_of_turned_vehicle():
    # heading +x, scatterer at +y: bearing 90 degrees counter-clockwise
    scene = SceneSpec(0, (Scatterer(0.0, 30.0, 1.0, 1.0),))
    scan = render_polar(scene, (0, 0, 0), GEO)
    assert np.argmax(scan.intensities.max(axis=1)) == GEO.azimuths // 4


def test_yaw_quarter_turn_is_row_shift(scene):
    a = render_polar(scene, (0, 0, 0), GEO).intensities
    b = render_polar(scene, (0, 0, math.pi / 2), GEO).intensities
    assert np.max(np.abs(b - np.roll(a, -GEO.azimuths // 4, axis=0))) <= 1e-6


def test_yaw_multiple_of_bin_is_row_shift(scene):
    k = 13
    a = render_polar(scene, (2.0, -1.0, 0.3), GEO).intensities
    b = render_polar(scene, (2.0, -1.0, 0.3 + 2 * math.pi * k / GEO.azimuths), GEO).intensities
    assert np.max(np.abs(b - np.roll(a, -k, axis=0))) <= 1e-6


def test_deterministic_with_noise(noisy_scene):
    a = render_polar(noisy_scene, (1.0, 2.0, 0.5), GEO, noise_seed=3).intensities
    b = render_polar(noisy_scene, (1.0, 2.0, 0.5), GEO, noise_seed=3).intensities
    c = render_polar(noisy_scene, (1.0, 2.0, 0.5), GEO, noise_seed=4).intensities
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_frame_rng_depends_on_pose():
    a = frame_rng(1, (0.0, 0.0, 0.0)).random()
    assert a == frame_rng(1, (0.0, 0.0, 0.0)).random()
    assert a != frame_rng(1, (0.0, 1e-9, 0.0)).random()


def test_ring_noise_and_clamp():
    noise = NoiseSpec(ring_bins=(10, 20), ring_amplitude=0.5)
    scene = SceneSpec(0, (Scatterer(2.0, 0.0, 1.0, 0.5),), noise)
    scan = render_polar(scene, (0, 0, 0), GEO)
    assert np.all(scan.intensities[:, 20] >= 0.5)
    assert scan.intensities.max() <= 1.0


def test_saturated_beams():
    scene = SceneSpec(5, (), NoiseSpec(saturation_prob=1.0))
    assert np.all(render_polar(scene, (0, 0, 0), GEO).intensities == 1.0)


@pytest.mark.parametrize("kwargs", [{"speckle_sigma": -1}, {"saturation_prob": 1.5}, {"ring_bins": (-1,)}])
def test_noise_rejects(kwargs):
    with pytest.raises(ParameterError):
        NoiseSpec(**kwargs)


def test_scene_rejects_bad_scatterer():
    with pytest.raises(ParameterError):
        SceneSpec(0, (Scatterer(0, 0, 1.5, 1.0),))
    with pytest.raises(ParameterError):
        SceneSpec(0, (Scatterer(0, 0, 0.5, 0.0),))


def test_scene_dict_round_trip(noisy_scene):
    assert SceneSpec.from_dict(json.loads(json.dumps(noisy_scene.to_dict()))) == noisy_scene


def test_square_loop_geometry():
    wp = square_loop(100.0, 40, overlap=1)
    assert wp.shape == (41, 3)
    np.testing.assert_allclose(wp[0], wp[40], atol=1e-9)
    np.testing.assert_allclose(wp[10], [100.0, 0.0, math.pi / 2])


def test_single_waypoint(tmp_path, scene):
    ds = make_trajectory_dataset(scene, [(0.0, 0.0, 0.0)], GEO, out_dir=tmp_path)
    assert len(ds.scans) == 1
    assert len(load_poses(tmp_path / "poses.csv")) == 1
    assert load_scan(tmp_path / "scans" / "000000.rps") == ds.scans[0]


def test_square_loop_has_revisit(scene):
    wp = square_loop(60.0, 24, overlap=1)
    wp[-1, :2] += (3.0, 2.0)  # ends within 5 m of the start
    ds = make_trajectory_dataset(scene, wp, ScanGeometry(64, 100, 1.0), exclusion_window=5)
    assert (0, 24) in ds.loop_pairs


def test_figure_eight_regenerates_identically(tmp_path):
    scene = random_scene(11, (-120, 120, -120, 120), 40, noise=NoiseSpec(speckle_sigma=0.2))
    geo = ScanGeometry(64, 120, 1.0)
    wp = figure_eight(100, 60.0)
    for out in ("a", "b"):
        make_trajectory_dataset(scene, wp, geo, out_dir=tmp_path / out)
    for name in ("poses.csv", "loops.csv", "scene.json", "scans/000000.rps", "scans/000099.rps"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_non_finite_waypoints(scene):
    with pytest.raises(ParameterError):
        make_trajectory_dataset(scene, [(0.0, math.nan, 0.0)], GEO)


def test_noise_robustness_target():
    """A noisy re-render of a place stays closer than an unrelated place on >= 90% of seeds."""
    noise = NoiseSpec(speckle_sigma=0.2, ring_bins=(30, 31, 120, 121), ring_amplitude=0.5)
    grid = GridSpec(141)

    def describe(scene, seed):
        return make_descriptor(radon_transform(backward_warp(render_polar(scene, (0, 0, 0), GEO, noise_seed=seed), grid), 90))

    wins = 0
    for seed in range(100):
        a = random_scene(seed, (-100, 100, -100, 100), 150, noise=noise)
        b = random_scene(50_000 + seed, (-100, 100, -100, 100), 150, noise=noise)
        q = describe(a, 1)
        wins += similarity_distance(q, describe(a, 2)).d < similarity_distance(q, describe(b, 2)).d
    assert wins >= 90
