"""Shared fixtures: one frozen synthetic corpus plus trained networks.

Training is the expensive part of the suite, so the two desk-scale
networks (statistics pooling for verification, average pooling for the
frame-level analyses) are trained once per session and shared.
"""

import numpy as np
import pytest

from voxframe import corpus as C
from voxframe import model as M

# Frozen desk-scale configuration used across the suite.
MAIN_SYNTH = C.SynthConfig(
    n_speakers=20, utts_per_speaker=10, phones_per_utt=24, sample_rate=16000, seed=7
)
SPLIT_SEED = 3
TRIAL_SEED = 13
N_TARGET = N_NONTARGET = 200
TRAIN_HYPER = dict(
    epochs=10, lr=0.002, batch_size=8, crops_per_utterance=6, seed=5,
    checkpoint_epochs=(0, 10),
)
STATS_BUILD_SEED = 11
AVG_BUILD_SEED = 23


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    C.synth_corpus(MAIN_SYNTH, out)
    return out


@pytest.fixture(scope="session")
def main_corpus(corpus_dir):
    return C.load_corpus(corpus_dir)


@pytest.fixture(scope="session")
def main_features(main_corpus):
    return M.prepare_features(main_corpus)


@pytest.fixture(scope="session")
def main_split(main_corpus):
    return C.split_per_speaker(main_corpus, 2, seed=SPLIT_SEED)


@pytest.fixture(scope="session")
def main_trials(main_corpus, main_split):
    _, held = main_split
    return C.sample_trials(
        main_corpus, N_TARGET, N_NONTARGET, seed=TRIAL_SEED, utterance_ids=held
    )


def _train_run(pooling, build_seed, corpus, features, split, tmp_path_factory):
    import time

    train_ids, _ = split
    out = tmp_path_factory.mktemp(f"net_{pooling}")
    net = M.build(M.desk_config(len(corpus.speakers()), pooling=pooling), seed=build_seed)
    t0 = time.time()
    ckpts = M.train(
        net,
        corpus,
        M.TrainConfig(**TRAIN_HYPER),
        utterance_ids=train_ids,
        features=features,
        out_dir=out,
    )
    return {
        "checkpoints": ckpts,
        "out_dir": out,
        "log": out / "train_log.csv",
        "train_seconds": time.time() - t0,
    }


@pytest.fixture(scope="session")
def stats_run(main_corpus, main_features, main_split, tmp_path_factory):
    """Statistics-pooling net trained for the verification experiments."""
    return _train_run(
        "statistics", STATS_BUILD_SEED, main_corpus, main_features, main_split,
        tmp_path_factory,
    )


@pytest.fixture(scope="session")
def avg_run(main_corpus, main_features, main_split, tmp_path_factory):
    """Average-pooling net trained for the frame-level analyses."""
    return _train_run(
        "average", AVG_BUILD_SEED, main_corpus, main_features, main_split,
        tmp_path_factory,
    )


CUE_SYNTH = C.SynthConfig(
    n_speakers=6, utts_per_speaker=6, phones_per_utt=24, seed=21,
    speaker_dependent_phones=("iy",), phone_weights=(("iy", 6.0),),
)


@pytest.fixture(scope="session")
def cue_corpus(tmp_path_factory):
    """Corpus whose speaker identity lives exclusively in the phone 'iy'."""
    out = tmp_path_factory.mktemp("cue_corpus")
    C.synth_corpus(CUE_SYNTH, out)
    return C.load_corpus(out)


@pytest.fixture(scope="session")
def cue_features(cue_corpus):
    return M.prepare_features(cue_corpus)


@pytest.fixture(scope="session")
def cue_net(cue_corpus, cue_features):
    net = M.build(M.desk_config(6, pooling="average"), seed=31)
    M.train(
        net,
        cue_corpus,
        M.TrainConfig(
            epochs=20, lr=0.002, batch_size=8, crops_per_utterance=6, seed=5,
            checkpoint_epochs=(20,),
        ),
        features=cue_features,
    )
    return net


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
