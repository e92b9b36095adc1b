import numpy as np
import pytest
import tensorflow as tf

from cascade_volcomp import create_model
from cascade_volcomp.architectures import (
    GuidanceBundle,
    denoise_forward,
    sr_denoise_forward,
    sr_sample,
    upsample_cond,
)
from cascade_volcomp.diffusion import make_linear_schedule, oracle_denoiser
from cascade_volcomp.models import floatx, loss_gradient_check, randomize_weights
from cascade_volcomp.volume import Volume3D


def _asmm_inputs(dims, batch_size=2, seed=0, dtype="float32"):
    rng = np.random.default_rng(seed)
    shape = (batch_size, *dims, 1)
    return {
        "x_t": rng.normal(size=shape).astype(dtype),
        "t": rng.integers(1, 100, size=batch_size).astype(dtype),
        "guide": rng.uniform(size=shape).astype(dtype),
        "age": rng.uniform(3.0, 24.0, size=batch_size).astype(dtype),
    }


def _sr_inputs(low_dims, batch_size=2, seed=0, dtype="float32"):
    rng = np.random.default_rng(seed)
    high_dims = tuple(2 * n for n in low_dims)
    return {
        "x_t": rng.normal(size=(batch_size, *high_dims, 1)).astype(dtype),
        "t": rng.integers(1, 100, size=batch_size).astype(dtype),
        "z": rng.uniform(size=(batch_size, *low_dims, 1)).astype(dtype),
    }


@pytest.mark.parametrize("model_name", ["asmm_tiny", "asmm_shared_desk"])
@pytest.mark.timeout(60)
def test_asmm_features(model_name):
    """Return value does not change if we also ask for features."""
    model = create_model(model_name, in_dims=(8, 8, 8))
    randomize_weights(model)
    inputs = _asmm_inputs(model.cfg.in_dims)
    x1, features = model(inputs, return_features=True)
    x2 = model(inputs)
    assert np.max(np.abs(x1.numpy() - x2.numpy())) < 1e-6
    assert x1.shape == inputs["x_t"].shape

    scores = features["attention_scores"]
    assert scores.shape[-1] == model.cfg.age_tokens
    assert ("bottleneck_guide" in features) == (model.cfg.guidance_mode != "concat")


@pytest.mark.timeout(60)
def test_asmm_two_encoders():
    """The guidance encoder has its own weights, separate from the image encoder."""
    model = create_model("asmm_tiny")
    weights_x = {id(w) for w in model.encoder_x.weights}
    weights_guide = {id(w) for w in model.encoder_guide.weights}
    assert len(weights_x) == len(weights_guide) > 0
    assert weights_x.isdisjoint(weights_guide)

    shared = create_model("asmm_shared_desk", in_dims=(8, 8, 8))
    assert shared.encoder_guide is None
    # Guidance enters as a second input channel of the stem
    assert shared.encoder_x.stem.kernel.shape[-2] == 2


@pytest.mark.timeout(60)
def test_asmm_conditioning():
    """Output depends on the diffusion step, the guidance volume and the target age."""
    model = create_model("asmm_tiny")
    randomize_weights(model)
    inputs = _asmm_inputs(model.cfg.in_dims)
    ref = model(inputs).numpy()
    for key in ("t", "guide", "age"):
        changed = dict(inputs)
        changed[key] = inputs[key] + 1.0
        assert np.max(np.abs(model(changed).numpy() - ref)) > 1e-6


@pytest.mark.timeout(60)
def test_asmm_wrong_dims():
    model = create_model("asmm_tiny")
    inputs = _asmm_inputs((8, 8, 4))
    with pytest.raises(ValueError):
        model(inputs)


@pytest.mark.timeout(60)
def test_denoise_forward():
    model = create_model("asmm_tiny")
    randomize_weights(model)
    rng = np.random.default_rng(0)
    guidance = GuidanceBundle(Volume3D(rng.uniform(size=(8, 8, 8))), 12.0)
    x_t = rng.normal(size=(3, 8, 8, 8))

    batch = denoise_forward(model, x_t, 5, guidance)
    assert batch.shape == (3, 8, 8, 8)
    assert batch.dtype == np.float64
    single = denoise_forward(model, x_t[1], 5, guidance)
    assert single.shape == (8, 8, 8)
    assert np.max(np.abs(single - batch[1])) < 1e-5

    with pytest.raises(ValueError):
        GuidanceBundle(guidance.guide_volume, 0.0)
    with pytest.raises(ValueError):
        denoise_forward(model, x_t, -1, guidance)
    small = GuidanceBundle(Volume3D(np.zeros((4, 4, 4))), 12.0)
    with pytest.raises(ValueError):
        denoise_forward(model, x_t, 5, small)

    model.weights[0].assign(np.full(model.weights[0].shape, np.inf))
    with pytest.raises(ValueError):
        denoise_forward(model, x_t, 5, guidance)


@pytest.mark.timeout(60)
def test_sr_forward():
    model = create_model("sr_tiny")
    randomize_weights(model)
    inputs = _sr_inputs(model.cfg.low_dims)
    assert model(inputs).shape == (2, 8, 8, 8, 1)

    rng = np.random.default_rng(0)
    z = rng.uniform(size=(4, 4, 4))
    assert upsample_cond(model, z).shape == (8, 8, 8)

    x_t = rng.normal(size=(2, 8, 8, 8))
    eps_hat = sr_denoise_forward(model, x_t, 3, z)
    assert eps_hat.shape == (2, 8, 8, 8)
    with pytest.raises(ValueError):
        sr_denoise_forward(model, x_t, 3, rng.uniform(size=(3, 4, 4, 4)))


def test_sr_sample_oracle():
    sched = make_linear_schedule(1e-4, 2e-2, 1000)
    rng = np.random.default_rng(0)
    x0 = rng.uniform(size=(8, 8, 8))
    z0 = Volume3D(x0).voxels.reshape(4, 2, 4, 2, 4, 2).mean(axis=(1, 3, 5))
    oracle = oracle_denoiser(x0, sched)

    x = sr_sample(lambda x_t, t, z: oracle(x_t, t), z0, sched, steps=20)
    assert x.shape == (8, 8, 8)
    assert np.max(np.abs(x - x0)) < 1e-5

    with pytest.raises(ValueError):
        sr_sample(create_model("sr_tiny"), np.zeros((5, 5, 5)), sched, steps=2)


@pytest.mark.timeout(120)
def test_sr_sample_with_network():
    sched = make_linear_schedule(1e-4, 2e-2, 10)
    model = create_model("sr_tiny")
    randomize_weights(model)
    z0 = np.random.default_rng(0).uniform(size=(4, 4, 4))
    a = sr_sample(model, z0, sched, steps=3, seed=1)
    b = sr_sample(model, z0, sched, steps=3, seed=1)
    assert a.shape == (8, 8, 8)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("model_name", ["asmm_tiny", "sr_tiny"])
@pytest.mark.timeout(300)
def test_gradient_check(model_name):
    """Analytic gradients of the training loss agree with finite differences."""
    with floatx("float64"):
        model = create_model(model_name)
        randomize_weights(model, seed=2)
        if model_name == "asmm_tiny":
            batch = _asmm_inputs(model.cfg.in_dims, dtype="float64")
        else:
            batch = _sr_inputs(model.cfg.low_dims, dtype="float64")
        batch["eps"] = np.random.default_rng(1).normal(size=batch["x_t"].shape)
        res = loss_gradient_check(model, batch, nb_weights=32, h=1e-3)

    assert model.compute_dtype == "float64"
    assert len(res.checked_weights) == 32
    assert res.max_rel_error < 1e-3



@pytest.mark.timeout(300)
def test_gradient_check_loss_scale():
    """Gradients vanish for a zero loss scale and grow linearly with it."""
    with floatx("float64"):
        model = create_model("asmm_tiny")
        randomize_weights(model, seed=2)
        batch = _asmm_inputs(model.cfg.in_dims, dtype="float64")
        batch["eps"] = np.random.default_rng(1).normal(size=batch["x_t"].shape)
        results = {
            scale: loss_gradient_check(model, batch, nb_weights=8, loss_scale=scale)
            for scale in [0.0, 1.0, 2.5]
        }

    assert np.all(results[0.0].analytic == 0.0)
    assert np.all(results[0.0].numeric == 0.0)
    assert results[0.0].max_rel_error == 0.0

    unit, scaled = results[1.0], results[2.5]
    assert unit.checked_weights == scaled.checked_weights
    assert np.max(np.abs(unit.analytic)) > 0
    tol = 1e-9 * np.max(np.abs(scaled.analytic))
    assert np.max(np.abs(scaled.analytic - 2.5 * unit.analytic)) < tol
