import numpy as np
import pytest

from mindloop.curriculum import synth_pool, vision_training_images
from mindloop.language import IpsModel
from mindloop.pfc import ModelBundle, PfcModel
from mindloop.seeding import make_rng
from mindloop.vision import train_autoencoder


@pytest.fixture(scope="session")
def pool():
    return synth_pool(400, seed=2024)


@pytest.fixture(scope="session")
def small_vision(pool):
    """A quickly trained autoencoder good enough for plumbing tests."""
    imgs = vision_training_images(pool, 3000, make_rng(5))
    model, _ = train_autoencoder(imgs, steps=900, batch=32, widths=(256, 128),
                                 seed=6, eval_every=900)
    return model


@pytest.fixture(scope="session")
def untrained_bundle(pool):
    rng = make_rng(7)
    from mindloop.vision import VisionModel

    vision = VisionModel.new(rng, widths=(64, 64), v3=32, v4=16)
    ips = IpsModel.new(rng, hidden=8)
    pfc = PfcModel.new(rng, v3_dim=32, v4_dim=16, hidden=32)
    return ModelBundle(vision=vision, ips=ips, pfc=pfc)
