import pytest
import torch

from halluc.data import SynthSpec, make_split, sample_episode, synth_dataset
from halluc.tcgan import GanHyper, finetune_novel, pretrain_base

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset():
    return synth_dataset(
        SynthSpec(num_classes=5, samples_per_class=12, image_shape=(16, 16, 3),
                  embed_dim=8, noise_level=0.1, seed=3)
    )


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    return make_split(tiny_dataset, 0.6, seed=1)


@pytest.fixture(scope="session")
def tiny_episode(tiny_dataset, tiny_split):
    return sample_episode(tiny_dataset, tiny_split, n_shot=2, query_per_class=5, seed=7)


@pytest.fixture(scope="session")
def tiny_hyper():
    return GanHyper(d_z=8, batch_size=8, steps_pretrain=30, steps_finetune=20,
                    gen_width=8, disc_width=8, cond_dim=8, seed=5)


@pytest.fixture(scope="session")
def pretrained_tiny(tiny_dataset, tiny_split, tiny_hyper):
    return pretrain_base(tiny_dataset, tiny_split, tiny_hyper)


@pytest.fixture(scope="session")
def tuned_tiny(pretrained_tiny, tiny_episode, tiny_hyper):
    return finetune_novel(pretrained_tiny, tiny_episode, tiny_hyper)
