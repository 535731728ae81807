import numpy as np
import pytest

from plasticity_lab.nn import NetworkSpec, init_params
from plasticity_lab.rng import RngStream


def tiny_mlp_spec(layer_norm=False):
    return NetworkSpec(
        kind="mlp", input_shape=(6,), hidden_widths=(5, 4), num_classes=3,
        layer_norm=layer_norm,
    )


def tiny_cnn_spec(layer_norm=False):
    return NetworkSpec(
        kind="cnn", input_shape=(2, 16, 16), conv_channels=(3, 3), fc_widths=(4,),
        num_classes=3, layer_norm=layer_norm,
    )


def random_instance(spec, seed, batch=4):
    """(params, images, labels) drawn from one seeded stream."""
    rng = RngStream(seed).split("instance", spec.kind, int(spec.layer_norm))
    params = init_params(spec, rng.split("params"))
    images = rng.uniform(0.0, 1.0, (batch,) + spec.input_shape)
    labels = np.asarray(rng.integers(0, spec.num_classes, batch))
    return params, images, labels


@pytest.fixture
def rng():
    return RngStream(1234)
