import numpy as np
import pytest

from pdmplab import datagen, harness


def tiny_spec(k: int = 2, m: int = 3, seed: int = 5, warp=(0, 0, 0)) -> datagen.DatasetSpec:
    mods = tuple(
        datagen.ModalitySpec(dim=4 + 2 * i, class_sep=2.5,
                             noise_sigma=0.8 + 0.4 * i, warp_depth=warp[i])
        for i in range(k)
    )
    return datagen.DatasetSpec(num_classes=m, modalities=mods,
                               n_train=96, n_val=48, n_test=48, seed=seed)


@pytest.fixture
def tiny_dataset() -> datagen.Dataset:
    return datagen.generate(tiny_spec())


def tiny_config(**overrides) -> harness.TrainConfig:
    base = dict(dataset="unused", encoder_widths=(8, 6), epochs=3, batch_size=16,
                learning_rate=0.01, momentum=0.9, weight_decay=1e-4, seed=1)
    base.update(overrides)
    return harness.TrainConfig(**base)
