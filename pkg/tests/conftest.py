"""Shared fixtures: a small synthetic corpus and a model trained on it.

Session-scoped so the expensive pieces (corpus render, training) run once.
The corpus is deliberately smaller than production scale to keep the unit
suite quick; the acceptance suite builds its own full-size corpus.
"""

import numpy as np
import pytest

from towinspect.config import PipelineConfig
from towinspect.corpus import generate_corpus, load_manifest
from towinspect.nnet import CAEModel, TrainConfig, train
from towinspect.anomaly import score_percentiles, score_samples
from towinspect.sampler import SampleSet, extract_windows
from towinspect.synth import SynthSpec
from towinspect.evaluate import preprocess_scan
from towinspect.towgeom import detect_layout

MINI = dict(width=192, height=160, tow_count=4, tow_width=21, seed=11)


@pytest.fixture(scope="session")
def mini_spec():
    return SynthSpec(**MINI)


@pytest.fixture(scope="session")
def mini_config():
    return PipelineConfig(tow_count=MINI["tow_count"], tow_width=MINI["tow_width"],
                          seed=MINI["seed"])


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory, mini_spec):
    """Corpus dir with 8 train scans, 1 defect test scan, 1 clean test scan."""
    out = tmp_path_factory.mktemp("mini_corpus")
    generate_corpus(out, mini_spec, train_scans=8, test_defect_scans=1,
                    test_normal_scans=1, defects_per_scan=2,
                    defect_extent=(44, 64))
    return out


@pytest.fixture(scope="session")
def mini_train_samples(mini_corpus, mini_config):
    _, entries = load_manifest(mini_corpus / "manifest.json")
    pooled = []
    for entry in entries:
        if entry.role != "train":
            continue
        dm = preprocess_scan(mini_corpus / entry.pgm)
        layout = detect_layout(dm, mini_config.tow_count)
        sset = extract_windows(dm, layout, source_id=entry.scan_id)
        pooled.extend(sset.samples)
    return SampleSet(tuple(pooled), source_id="mini:train")


@pytest.fixture(scope="session")
def trained_model(mini_train_samples):
    """Latent-16 model trained long enough to reconstruct normal texture."""
    model = CAEModel(16, seed=3)
    model, history = train(model, mini_train_samples,
                           TrainConfig(epochs=30, batch_size=128, seed=3))
    scores = score_samples(model, mini_train_samples)
    model.meta = {"final_train_mse": history[-1], **score_percentiles(scores)}
    return model
