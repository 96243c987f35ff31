import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sonar_context.errors import FormatError, OutOfViewError, ParameterError
from sonar_context.polar_image import (PolarImage, SensorModel, SonarPoint, cartesian_of, load_dataset,
                                       load_image, polar_of, read_pgm, save_image, write_pgm)

SENSOR = SensorModel()


def test_scale_factors():
    assert SENSOR.alpha == pytest.approx(260 / math.radians(130))
    assert SENSOR.beta == pytest.approx(10.0)
    assert SENSOR.shape == (500, 260)


@pytest.mark.parametrize("kwargs", [dict(fov_deg=0), dict(fov_deg=361), dict(min_range_m=50),
                                    dict(min_range_m=-1), dict(width_px=0), dict(height_px=0)])
def test_sensor_validation(kwargs):
    with pytest.raises(ParameterError):
        SensorModel(**kwargs)


def test_polar_of_examples():
    assert polar_of(SonarPoint(1.0, 0.0), SENSOR) == (130, 10)
    s = 0.5 * math.sqrt(2)
    assert polar_of(SonarPoint(s, s), SENSOR) == (220, 10)
    assert polar_of(SonarPoint(50.0, 0.0), SENSOR)[1] == 499


def test_polar_of_out_of_view():
    with pytest.raises(OutOfViewError):
        polar_of(SonarPoint(-1.0, 0.0), SENSOR)
    with pytest.raises(OutOfViewError):
        polar_of(SonarPoint(60.0, 0.0), SENSOR)


def test_cartesian_of_examples():
    p = cartesian_of(130, 10, SENSOR)
    assert math.degrees(p.azimuth) == pytest.approx(0.25)
    assert p.range == pytest.approx(1.05)
    corner = cartesian_of(0, 0, SENSOR)
    assert corner.azimuth == pytest.approx(-math.radians(65) + 0.5 / SENSOR.alpha)
    assert corner.range == pytest.approx(0.05)
    with pytest.raises(IndexError):
        cartesian_of(260, 0, SENSOR)


def test_round_trip_every_bin():
    for u in range(SENSOR.width_px):
        for v in range(0, SENSOR.height_px, 7):
            assert polar_of(cartesian_of(u, v, SENSOR), SENSOR) == (u, v)


in_view = st.tuples(st.floats(0.01, 49.99), st.floats(-math.radians(64.99), math.radians(64.99)))


@given(in_view)
def test_round_trip_within_one_bin(rt):
    r, th = rt
    u, v = polar_of(SonarPoint(r * math.cos(th), r * math.sin(th)), SENSOR)
    back = cartesian_of(u, v, SENSOR)
    assert abs(back.azimuth - th) <= 1.0 / SENSOR.alpha + 1e-12
    assert abs(back.range - r) <= 1.0 / SENSOR.beta + 1e-12


@given(in_view, in_view)
def test_polar_of_monotone(a, b):
    (r1, t1), (r2, t2) = sorted([a, b])
    _, v1 = polar_of(SonarPoint(r1, 0.0), SENSOR)
    _, v2 = polar_of(SonarPoint(r2, 0.0), SENSOR)
    assert v1 <= v2
    lo, hi = sorted([t1, t2])
    assert polar_of(SonarPoint(math.cos(lo), math.sin(lo)), SENSOR)[0] <= \
        polar_of(SonarPoint(math.cos(hi), math.sin(hi)), SENSOR)[0]


def test_polar_image_validation():
    with pytest.raises(FormatError):
        PolarImage(SENSOR, np.zeros((4, 4)))
    bad = np.zeros(SENSOR.shape)
    bad[0, 0] = 1.5
    with pytest.raises(ParameterError):
        PolarImage(SENSOR, bad)


def test_pgm_zero_and_full(tmp_path):
    small = SensorModel(width_px=4, height_px=4)
    write_pgm(tmp_path / "z.pgm", np.zeros((4, 4), np.uint8))
    assert not load_image(tmp_path / "z.pgm", small).pixels.any()
    write_pgm(tmp_path / "f.pgm", np.full((4, 4), 255, np.uint8))
    assert np.all(load_image(tmp_path / "f.pgm", small).pixels == 1.0)


def test_pgm_round_trip_bytes(tmp_path, rng):
    small = SensorModel(width_px=37, height_px=23)
    raw = rng.integers(0, 256, size=(23, 37), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", raw)
    img = load_image(tmp_path / "a.pgm", small)
    save_image(img, tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert np.array_equal(read_pgm(tmp_path / "b.pgm"), raw)


def test_pgm_header_comment_and_errors(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[0, 255]]
    (tmp_path / "bad.pgm").write_bytes(b"P2\n2 1\n255\n0 255")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "bad.pgm")
    (tmp_path / "short.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "short.pgm")
    with pytest.raises(FormatError):
        load_image(tmp_path / "c.pgm", SensorModel(width_px=3, height_px=1))


def test_load_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)
