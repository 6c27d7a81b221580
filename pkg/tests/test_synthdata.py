from pathlib import Path

import numpy as np
import pytest

from agri.flooddamage.change_detection import DamageLabel
from agri.flooddamage.errors import GridMismatchError, InputFileError
from agri.flooddamage.masking import ndvi_from_bands
from agri.flooddamage.raster import GeoTransform, QualityFlag, Raster
from agri.flooddamage.synthdata import (
    BUNDLE_FILES,
    MANIFEST_NAME,
    SceneSpec,
    degrade_to_lr,
    generate_scene,
    load_bundle,
    save_bundle,
)

GEO = GeoTransform(0.0, 0.0, 3.0, -3.0)


def _spec(**kwargs) -> SceneSpec:
    values = dict(hr_size=96, parcel_count=12, narrow_feature_count=2)
    values.update(kwargs)
    return SceneSpec(**values)


def test_scenes_are_deterministic():
    a = generate_scene(_spec(seed=4, cloud_fraction=0.1))
    b = generate_scene(_spec(seed=4, cloud_fraction=0.1))

    for (name, raster_a), (_, raster_b) in zip(a.rasters(), b.rasters()):
        assert raster_a.data.tobytes() == raster_b.data.tobytes(), name
        assert np.array_equal(raster_a.nodata_mask, raster_b.nodata_mask), name


def test_distinct_seeds_give_distinct_scenes():
    a = generate_scene(_spec(seed=1))
    b = generate_scene(_spec(seed=2))

    assert not np.array_equal(a.pre_hr.values, b.pre_hr.values)


def test_grids():
    scene = generate_scene(_spec(hr_size=768, parcel_count=40))

    assert scene.pre_hr.shape == (768, 768)
    assert scene.pre_lr.shape == (256, 256)
    assert scene.pre_bands.bands == 2
    assert scene.cropland.shape == (256, 256)
    assert scene.truth_labels.shape == (768, 768)
    assert scene.pre_lr.geo.pixel_size_x == pytest.approx(9.0)
    assert scene.pre_lr.geo.origin_x == scene.pre_hr.geo.origin_x
    assert scene.cropland_hr().is_cogridded(scene.pre_hr)


def test_no_damage_gives_no_labels():
    scene = generate_scene(_spec(damage_fraction=0.0, narrow_feature_count=0))

    assert (scene.truth_labels.values == DamageLabel.NO).all()


def test_full_damage_hits_every_cropland_pixel():
    spec = _spec(
        seed=3, cropland_fraction=1.0, damage_fraction=1.0, narrow_feature_count=0
    )

    scene = generate_scene(spec)

    assert (scene.truth_labels.values != DamageLabel.NO).all()
    assert (scene.cropland.values == 1).all()


def test_damage_is_visible_in_the_delta():
    scene = generate_scene(_spec(seed=5, damage_fraction=0.5))

    delta = scene.pre_hr.values - scene.post_hr.values
    labels = scene.truth_labels.values
    assert delta[labels == DamageLabel.FULL].mean() > 0.4
    assert abs(delta[labels == DamageLabel.NO].mean()) < 0.1


def test_band_products_reproduce_the_ndvi():
    scene = generate_scene(_spec(seed=6))

    ndvi = ndvi_from_bands(scene.pre_bands)

    assert ndvi.values == pytest.approx(scene.pre_lr.values, abs=1e-5)


def test_clouds_and_shadows():
    scene = generate_scene(_spec(seed=7, hr_size=288, cloud_fraction=0.2))

    cloud = scene.post_quality.has(QualityFlag.CLOUD)
    shadow = scene.post_quality.has(QualityFlag.SHADOW)
    assert cloud.mean() == pytest.approx(0.2, abs=0.02)
    assert shadow.any()
    assert not (cloud & shadow).any()
    assert scene.post_quality.invalid[cloud].all()


def test_glare_on_the_post_flood_product():
    scene = generate_scene(
        _spec(seed=8, damage_fraction=1.0, partial_share=0.0, water_glare_fraction=0.5)
    )

    glare = scene.post_quality.has(QualityFlag.WATER_GLARE)
    assert glare.any()
    assert not scene.pre_quality.has(QualityFlag.WATER_GLARE).any()


def test_misregistration_displaces_the_post_product():
    spec = _spec(seed=9, damage_fraction=0.0, misregistration_dx=2.0)
    scene = generate_scene(spec)

    post = ndvi_from_bands(scene.post_bands)

    # out[y, x] = in[y, x - 2]: the first two columns leave the raster
    assert post.nodata_mask[:, :2].all()
    assert post.values[:, 2:] == pytest.approx(scene.post_lr.values[:, :-2], abs=1e-5)


def test_degrading_a_constant_field():
    hr = Raster.from_array(np.full((12, 12), 0.4, dtype=np.float32), GEO)

    lr = degrade_to_lr(hr, 3, blur_sigma=0.5, noise_sigma=0.0)

    assert lr.shape == (4, 4)
    assert lr.geo == GEO.scaled(3)
    assert lr.values == pytest.approx(np.full((4, 4), 0.4), abs=1e-6)


def test_narrow_strips_are_attenuated():
    values = np.full((30, 30), 0.8, dtype=np.float32)
    values[:, 13] = 0.2
    hr = Raster.from_array(values, GEO)

    lr = degrade_to_lr(hr, 3, blur_sigma=0.0, noise_sigma=0.0)

    # one fine pixel out of three: a 0.2 drop instead of 0.6
    assert lr.values.min() == pytest.approx(0.6, abs=1e-6)
    blurred = degrade_to_lr(hr, 3, blur_sigma=0.5, noise_sigma=0.0)
    assert blurred.values.min() > 0.6


def test_degrading_propagates_nodata():
    values = np.zeros((6, 6), dtype=np.float32)
    values[4, 1] = np.nan
    hr = Raster.from_array(values, GEO)

    lr = degrade_to_lr(hr, 3, noise_sigma=0.0)

    assert lr.nodata_mask.tolist() == [[False, False], [True, False]]
    with pytest.raises(GridMismatchError):
        degrade_to_lr(Raster.from_array(np.zeros((7, 6)), GEO), 3)


def test_invalid_specs():
    with pytest.raises(ValueError):
        SceneSpec(hr_size=100, scale=3)
    with pytest.raises(ValueError):
        SceneSpec(strip_width_min=4, strip_width_max=2)


def test_save_and_load(tmp_path: Path):
    scene = generate_scene(_spec(seed=11, cloud_fraction=0.1))
    first, second = tmp_path / "a", tmp_path / "b"

    save_bundle(scene, first)
    save_bundle(scene, second)

    files = sorted(p.name for p in first.iterdir())
    assert files == sorted([f"{name}.fr1" for name in BUNDLE_FILES] + [MANIFEST_NAME])
    for name in files:
        assert (first / name).read_bytes() == (second / name).read_bytes()

    loaded = load_bundle(first)
    assert loaded.spec == scene.spec
    for (name, original), (_, restored) in zip(scene.rasters(), loaded.rasters()):
        assert restored.equals(original), name
    assert np.array_equal(loaded.post_quality.flags, scene.post_quality.flags)


def test_loading_incomplete_bundles(tmp_path: Path):
    with pytest.raises(InputFileError):
        load_bundle(tmp_path / "missing")

    directory = tmp_path / "scene"
    save_bundle(generate_scene(_spec()), directory)
    (directory / "cropland.fr1").unlink()
    with pytest.raises(InputFileError):
        load_bundle(directory)
