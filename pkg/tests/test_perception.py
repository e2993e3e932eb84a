import numpy as np
import pytest

from arlane.perception import (
    COEFF_SCALE, CoeffRegressor, LateralEstimator, PerceptionError, RegressorConfig, build_dataset,
    c0_sign_accuracy, frame_label_json, load_dataset, load_model, normalized_mse, predict_coeffs,
    predict_normalized, render_labeled, rerender, save_model, split_dataset, train_regressor,
)
from arlane.snow import NO_OCCLUSION, ViewConfig, write_labeled_frame
from arlane.track import Route, make_edge


@pytest.fixture(scope="module")
def frames():
    return build_dataset(6, 6, seed=3)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        build_dataset(0, 0)


def test_dataset_is_deterministic(frames):
    again = build_dataset(6, 6, seed=3)
    for a, b in zip(frames, again):
        assert np.array_equal(a.image, b.image)
        assert a.label == b.label


def test_dataset_composition(frames):
    kinds = [f.meta["kind"] for f in frames]
    assert kinds.count("sunny") == 6 and kinds.count("snowy") == 6
    assert all(f.meta["occlusion"]["snow_density"] == 0 for f in frames if f.meta["kind"] == "sunny")
    assert all(f.image.shape == (1, 64, 64) for f in frames)


def test_straight_centered_label_is_zero():
    route = Route([make_edge(0, 1, (0.0, 0.0, 0.0), "straight", 200.0)], 0, 1)
    fr = render_labeled(route, 30.0, 0.0, 0.0, NO_OCCLUSION, ViewConfig())
    assert np.allclose(fr.label.as_array(), 0.0, atol=1e-10)


def test_split_sizes(frames):
    tr, va = split_dataset(frames, 0.25, 0)
    assert len(tr) == 9 and len(va) == 3
    assert {id(f) for f in tr}.isdisjoint({id(f) for f in va})


def test_zero_model_output_is_constant(frames):
    model = CoeffRegressor(RegressorConfig(zero_init=True))
    out = predict_normalized(model, np.stack([f.image for f in frames]))
    assert np.all(out == out[0])


def test_prediction_shape_checked():
    with pytest.raises(ValueError):
        predict_normalized(CoeffRegressor(), np.zeros((1, 1, 32, 32)))


def test_prediction_is_deterministic(frames):
    model = CoeffRegressor(seed=1)
    assert predict_coeffs(model, frames[0].image) == predict_coeffs(model, frames[0].image)
    assert predict_coeffs(model, frames[0].image[0]) == predict_coeffs(model, frames[0].image)


def test_overfits_single_frame(frames):
    model, rep = train_regressor(frames[:1], epochs=300, lr=1e-3, batch_size=1)
    assert normalized_mse(model, frames[:1]) < 1e-4
    assert rep.loss_curve[-1] < rep.loss_curve[0]


def test_divergence_aborts(frames):
    with pytest.raises(PerceptionError):
        train_regressor(frames, epochs=5, lr=10.0)


def test_mirrored_scene_renders_flipped_image_with_negated_label(frames):
    fr = frames[0]
    m = render_labeled(fr.route.mirrored(), fr.meta["s"], -fr.meta["d"], -fr.meta["phi"], NO_OCCLUSION,
                       ViewConfig())
    clean = rerender([fr], lambda i: NO_OCCLUSION)[0]
    assert np.array_equal(m.image, clean.image[..., ::-1])
    assert np.allclose(m.label.as_array(), -clean.label.as_array(), atol=1e-9)


def test_lateral_estimator_returns_negated_offset(frames):
    model = CoeffRegressor(seed=0)
    est = LateralEstimator(model)
    assert est(frames[0].image) == -predict_coeffs(model, frames[0].image).c0


def test_sign_accuracy_counts_matches(frames):
    model = CoeffRegressor(RegressorConfig(zero_init=True))
    model.layers[-1].b.value[0] = 1.0
    truth = np.mean([f.label.c0 > 0 for f in frames])
    assert c0_sign_accuracy(model, frames) == pytest.approx(truth)


def test_rerender_keeps_pose_and_label(frames):
    clean = rerender(frames[:3], lambda i: NO_OCCLUSION)
    for a, b in zip(frames[:3], clean):
        assert a.label == b.label and a.meta["d"] == b.meta["d"]


def test_model_round_trip(tmp_path, frames):
    model = CoeffRegressor(seed=4)
    save_model(model, tmp_path / "m.ckpt")
    back = load_model(tmp_path / "m.ckpt")
    assert predict_coeffs(back, frames[0].image) == predict_coeffs(model, frames[0].image)


def test_dataset_files_round_trip(tmp_path, frames):
    for i, fr in enumerate(frames[:3]):
        write_labeled_frame(tmp_path, i, fr.image, frame_label_json(fr))
    back = load_dataset(tmp_path)
    assert len(back) == 3
    for a, b in zip(frames, back):
        assert np.array_equal(a.image, b.image)
        assert np.allclose(a.label.as_array(), b.label.as_array(), rtol=0, atol=0)


def test_normalization_scales_positive():
    assert np.all(COEFF_SCALE > 0)
