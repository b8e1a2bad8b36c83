import numpy as np
import pytest

from dpfim.corpus import make_fim_example
from dpfim.model import LoraConfig, ModelConfig, init_model, make_batch
from dpfim.seeding import rng_for
from dpfim.synth import synth_documents


def small_examples(n_docs=24, seed=5, target_bytes=80, min_middle=4, max_len=96):
    docs = synth_documents(n_docs, seed=seed, target_bytes=target_bytes)
    rng = rng_for(seed, "fim-cuts")
    out = [make_fim_example(d, rng, min_middle, max_len) for d in docs]
    return [e for e in out if e is not None]


@pytest.fixture(scope="session")
def small_corpus():
    return small_examples()


@pytest.fixture(scope="session")
def small_model():
    cfg = ModelConfig(d_model=32, n_layers=2, n_heads=2, context_len=96)
    return init_model(cfg, LoraConfig(rank=4, alpha=8.0), seed=11)


@pytest.fixture(scope="session")
def small_batch(small_model, small_corpus):
    return make_batch(small_corpus[:6], small_model.cfg.context_len)


@pytest.fixture(scope="session")
def micro_model():
    cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, context_len=32)
    params = init_model(cfg, LoraConfig(rank=4, alpha=8.0), seed=3)
    # move adapters off the zero init so every coordinate has signal
    rng = np.random.default_rng(0)
    flat = params.flat_adapters()
    return params.with_flat_adapters(flat + rng.normal(0.0, 0.05, size=flat.shape))
