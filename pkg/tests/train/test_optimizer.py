import pytest
import tensorflow as tf

from cascade_volcomp.train import OptimizerConfig, OptimizerFactory


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
@pytest.mark.parametrize("lr_schedule", ["const", "cosine_decay"])
@pytest.mark.parametrize("clipping", ["global_clipnorm", "clipvalue", "none"])
def test_optimizer(optimizer, lr_schedule, clipping):
    cfg = OptimizerConfig(
        lr=0.001,
        optimizer=optimizer,
        lr_schedule=lr_schedule,
        global_clipnorm=1.0 if clipping == "global_clipnorm" else -1.0,
        clipvalue=0.5 if clipping == "clipvalue" else -1.0,
    )
    optimizer = OptimizerFactory(cfg, nb_steps=10)()

    var = tf.Variable(3.0, dtype="float32")

    # `loss` is a callable that takes no argument and returns the value to minimize.
    def loss():
        return 3.0 * var

    # We test if we can use the optimizer
    for _ in range(10):
        optimizer.minimize(loss, var_list=[var])
    assert var.numpy() < 3.0


def test_global_clipnorm():
    """Gradient of norm 30 is clipped to norm 1, so SGD moves by exactly lr."""
    cfg = OptimizerConfig(lr=0.1, optimizer="sgd", betas=(0.0, 0.0))
    optimizer = OptimizerFactory(cfg, nb_steps=1)()
    var = tf.Variable(3.0, dtype="float32")
    optimizer.minimize(lambda: 30.0 * var, var_list=[var])
    assert abs(var.numpy() - 2.9) < 1e-6


@pytest.mark.parametrize(
    "kwargs",
    [
        {"optimizer": "rmsprop"},
        {"lr_schedule": "multisteps"},
        {"global_clipnorm": 1.0, "clipvalue": 1.0},
    ],
)
def test_invalid_optimizer(kwargs):
    cfg = OptimizerConfig(**kwargs)
    with pytest.raises(ValueError):
        OptimizerFactory(cfg, nb_steps=10)()
