import csv
import io

import numpy as np
import pytest

from voxframe import corpus as C
from voxframe import frontend as F
from voxframe import model as M
from voxframe.errors import ConfigError, NumericError, TooShortError, UnsupportedModeError


def _random_fm(rng, t=80, utt_id="u"):
    return F.FeatureMatrix(utt_id, rng.normal(0, 3, (t, 40)), 16000)


class TestConfigAndBuild:
    def test_desk_preset_audit_passes(self):
        net = M.build(M.desk_config(10), seed=0)
        assert net.config.channels == (64, 64, 64, 96)
        assert net.config.fc1_size == 96
        assert net.config.embedding_size == 32

    def test_full_scale_parameter_counts(self):
        # Exact counts from the layer shapes; the average-pooling variant is
        # the one matching the nominal 13M budget of this architecture
        # (within 10%); statistics pooling doubles the fc1 input and lands
        # at 15.1M.
        avg = M.build(M.full_scale_config(1211, pooling="average"), seed=0)
        stats = M.build(M.full_scale_config(1211, pooling="statistics"), seed=0)
        assert avg.parameter_count() == 12_856_600
        assert stats.parameter_count() == 15_106_600
        assert abs(avg.parameter_count() - 13_000_000) <= 0.10 * 13_000_000

    def test_full_scale_embedding_dimension(self):
        net = M.build(M.full_scale_config(50), seed=1)
        assert net.fc2.weights.shape[0] == 600

    def test_build_deterministic(self):
        a = M.build(M.desk_config(5), seed=42)
        b = M.build(M.desk_config(5), seed=42)
        for (na, pa), (nb, pb) in zip(a.parameters(), b.parameters()):
            assert na == nb
            assert np.array_equal(pa, pb)

    def test_inconsistent_config_rejected(self):
        with pytest.raises(ConfigError):
            M.SpeakerNetConfig(n_speakers=5, pooling="max").validate()
        with pytest.raises(ConfigError):
            M.SpeakerNetConfig(n_speakers=1).validate()
        with pytest.raises(ConfigError):
            M.SpeakerNetConfig(n_speakers=5, strides=(1, 0, 1, 1)).validate()

    def test_min_frames(self):
        net = M.build(M.desk_config(4), seed=0)
        assert net.min_frames() == 11
        fm = F.FeatureMatrix("u", np.zeros((10, 40)), 16000)
        with pytest.raises(TooShortError) as err:
            net.forward_segment(fm)
        assert err.value.min_frames == 11


class TestForward:
    def test_shapes_and_finiteness(self, rng):
        net = M.build(M.desk_config(7), seed=1)
        fwd = net.forward_segment(_random_fm(rng))
        assert fwd.logits.shape == (7,)
        assert fwd.fc1_tap.shape == (96,)
        assert fwd.fc2_tap.shape == (32,)
        assert np.all(np.isfinite(fwd.logits))

    def test_extract_deterministic(self, rng):
        net = M.build(M.desk_config(4), seed=2)
        fm = _random_fm(rng)
        assert np.array_equal(net.extract_embedding(fm), net.extract_embedding(fm))

    def test_extract_tap_selection(self, rng):
        net = M.build(M.desk_config(4), seed=2)
        fm = _random_fm(rng)
        fwd = net.forward_segment(fm)
        assert np.array_equal(net.extract_embedding(fm, "fc1"), fwd.fc1_tap)
        assert np.array_equal(net.extract_embedding(fm, "fc2"), fwd.fc2_tap)
        with pytest.raises(ConfigError):
            net.extract_embedding(fm, "fc3")

    def test_periodic_input_doubling_invariance(self, rng):
        # Period-2 frames, even frame count: averaging is exact over whole
        # periods at every layer, so doubling the input changes nothing.
        net = M.build(M.desk_config(4, pooling="average"), seed=3)
        pair = rng.normal(0, 2, (2, 40))
        base = np.tile(pair, (25, 1))  # 50 frames
        doubled = np.tile(pair, (50, 1))
        e1 = net.extract_embedding(F.FeatureMatrix("a", base, 16000))
        e2 = net.extract_embedding(F.FeatureMatrix("a2", doubled, 16000))
        assert np.max(np.abs(e1 - e2)) <= 1e-9 * max(1.0, np.max(np.abs(e1)))

    def test_time_shift_covariance_layer1(self, rng):
        net = M.build(M.desk_config(4, pooling="average"), seed=4)
        frames = rng.normal(0, 2, (60, 40))
        fe_full = net.frame_mode_forward(F.FeatureMatrix("a", frames, 16000))[1]
        fe_shift = net.frame_mode_forward(F.FeatureMatrix("b", frames[1:], 16000))[1]
        assert np.array_equal(fe_full.vectors[1:], fe_shift.vectors)


class TestFrameMode:
    def test_relocation_identity_random_nets(self, rng):
        for seed in range(5):
            net = M.build(M.desk_config(5, pooling="average"), seed=seed)
            fm = _random_fm(rng, t=70)
            pooled = net.extract_embedding(fm)
            frames = net.frame_mode_forward(fm)[6]
            moved = frames.vectors.mean(axis=0)
            denom = max(float(np.linalg.norm(pooled)), 1e-12)
            assert np.linalg.norm(pooled - moved) / denom <= 1e-9

    def test_relu_variant_breaks_identity(self):
        rng = np.random.default_rng(7)
        net = M.build(M.desk_config(5, pooling="average", relu_before_fc2=True), seed=7)
        fm = _random_fm(rng, t=70)
        pooled = net.extract_embedding(fm)
        moved = net.frame_mode_forward(fm)[6].vectors.mean(axis=0)
        deviation = np.linalg.norm(pooled - moved) / np.linalg.norm(pooled)
        assert deviation > 1e-3

    def test_statistics_pooling_refused(self, rng):
        net = M.build(M.desk_config(5, pooling="statistics"), seed=1)
        with pytest.raises(UnsupportedModeError):
            net.frame_mode_forward(_random_fm(rng))

    def test_layer_lengths_and_rates(self, rng):
        net = M.build(M.desk_config(5, pooling="average"), seed=1)
        fm = _random_fm(rng, t=98)
        frames = net.frame_mode_forward(fm)
        assert frames[1].vectors.shape == (94, 64)
        assert frames[1].rate_ms == 10.0
        assert frames[2].vectors.shape == (44, 64)
        for layer in range(2, 7):
            assert frames[layer].rate_ms == 20.0
            assert frames[layer].vectors.shape[0] == 44
        assert frames[5].vectors.shape[1] == 96
        assert frames[6].vectors.shape[1] == 32

    def test_checkpoint_roundtrip_bit_identical_logits(self, tmp_path, rng):
        net = M.build(M.desk_config(6), seed=9)
        fm = _random_fm(rng)
        path = tmp_path / "net.ckpt"
        net.save(path, extra_header={"epoch": 0})
        loaded, header = M.SpeakerNet.load(path)
        assert header["epoch"] == 0
        assert np.array_equal(
            net.forward_segment(fm).logits, loaded.forward_segment(fm).logits
        )


class TestCheckpointSchedule:
    def test_default_schedule(self):
        assert M.default_checkpoint_epochs(10) == (0, 1, 2, 5, 10)
        assert M.default_checkpoint_epochs(70) == (0, 1, 2, 5, 10, 20, 50, 70)
        assert M.default_checkpoint_epochs(0) == (0,)


class TestTraining:
    @pytest.fixture(scope="class")
    def smoke_corpus(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("smoke")
        C.synth_corpus(
            C.SynthConfig(n_speakers=2, utts_per_speaker=25, phones_per_utt=16, seed=17),
            out,
        )
        corp = C.load_corpus(out)
        return corp, M.prepare_features(corp)

    def test_two_speaker_smoke(self, smoke_corpus):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(2, pooling="statistics"), seed=3)
        hyper = M.TrainConfig(
            epochs=5, lr=0.002, batch_size=8, crops_per_utterance=6, seed=9,
            checkpoint_epochs=(5,),
        )
        M.train(net, corp, hyper, features=feats)
        assert M.training_accuracy(net, corp, feats) > 0.95

    def test_zero_epochs_returns_initial_checkpoint(self, smoke_corpus):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(2), seed=5)
        before = {k: v.copy() for k, v in net.param_dict().items()}
        ckpts = M.train(net, corp, M.TrainConfig(epochs=0, seed=1), features=feats)
        assert len(ckpts) == 1 and ckpts[0].epoch == 0
        for name, arr in ckpts[0].net.parameters():
            assert np.array_equal(arr, before[name])

    def test_lr_schedule_during_training(self, smoke_corpus):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(2), seed=5)
        hyper = M.TrainConfig(
            epochs=2, lr=0.001, lr_decay=0.5, decay_every=4, batch_size=16,
            crops_per_utterance=1, seed=1, checkpoint_epochs=(1, 2),
        )
        ckpts = M.train(net, corp, hyper, features=feats)
        # 50 utterances / 16 per batch = 4 updates per epoch.
        assert ckpts[0].update_count == 4
        assert ckpts[0].lr == pytest.approx(0.001 * 0.5)
        assert ckpts[1].update_count == 8
        assert ckpts[1].lr == pytest.approx(0.001 * 0.25)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_context(self, smoke_corpus):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(2), seed=5)
        hyper = M.TrainConfig(epochs=1, lr=1e9, batch_size=8, seed=1)
        with pytest.raises(NumericError, match="epoch 1"):
            M.train(net, corp, hyper, features=feats)

    def test_speaker_count_mismatch(self, smoke_corpus):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(3), seed=5)
        with pytest.raises(ConfigError):
            M.train(net, corp, M.TrainConfig(epochs=1), features=feats)

    def test_training_log_format(self, smoke_corpus, tmp_path):
        corp, feats = smoke_corpus
        net = M.build(M.desk_config(2), seed=5)
        log = tmp_path / "log.csv"
        M.train(
            net, corp,
            M.TrainConfig(epochs=1, batch_size=16, seed=1, checkpoint_epochs=()),
            features=feats, log_path=log,
        )
        rows = list(csv.reader(log.open()))
        assert rows[0] == ["epoch", "batch", "loss", "lr", "accuracy"]
        assert len(rows) > 1


class TestMainRunProperties:
    """Checks on the session-trained desk networks."""

    def test_first_three_epoch_losses_strictly_decrease(self, stats_run):
        rows = list(csv.reader(stats_run["log"].open()))[1:]
        per_epoch = {}
        for r in rows:
            per_epoch.setdefault(int(r[0]), []).append(float(r[2]))
        means = [np.mean(per_epoch[e]) for e in (1, 2, 3)]
        assert means[0] > means[1] > means[2]

    def test_within_speaker_cosine_beats_across(self, stats_run, main_corpus, main_features, main_split):
        from voxframe.backend import cosine_score

        net = stats_run["checkpoints"][-1].net
        _, held = main_split
        embs = {i: net.extract_embedding(main_features[i]) for i in held}
        within, across = [], []
        ids = sorted(held)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                c = cosine_score(embs[ids[a]], embs[ids[b]])
                same = (
                    main_corpus.get(ids[a]).speaker_id
                    == main_corpus.get(ids[b]).speaker_id
                )
                (within if same else across).append(c)
        assert np.mean(within) > np.mean(across)

    def test_relocation_identity_on_trained_net(self, avg_run, main_features, main_split):
        net = avg_run["checkpoints"][-1].net
        train_ids, _ = main_split
        for utt_id in train_ids[:5]:
            fm = main_features[utt_id]
            pooled = net.extract_embedding(fm)
            moved = net.frame_mode_forward(fm)[6].vectors.mean(axis=0)
            assert np.linalg.norm(pooled - moved) <= 1e-9 * max(
                1.0, np.linalg.norm(pooled)
            )

    def test_checkpoints_on_disk_load(self, stats_run):
        for ckpt in stats_run["checkpoints"]:
            assert ckpt.path is not None and ckpt.path.exists()
            net, header = M.SpeakerNet.load(ckpt.path)
            assert header["epoch"] == ckpt.epoch


class TestAugmentation:
    def test_white_noise_snr_and_id(self, rng):
        utt = C.Utterance("u1", "s", 0.3 * np.sin(np.arange(8000) * 0.1), 16000)
        corp = C.Corpus([utt, C.Utterance("u2", "t", np.full(8000, 0.1), 16000)])
        noisy = M._augmented_utterance(
            utt, M.AugmentConfig("white", snr_db=10.0), corp, rng
        )
        assert noisy.id == "u1~aug"
        assert noisy.speaker_id == "s"
        assert np.max(np.abs(noisy.samples)) <= 1.0
        noise = noisy.samples - utt.samples
        snr = 10 * np.log10(np.mean(utt.samples**2) / np.mean(noise**2))
        assert snr == pytest.approx(10.0, abs=1.5)

    def test_babble_mixes_other_speakers(self, rng):
        a = C.Utterance("a", "s1", 0.2 * np.sin(np.arange(4000) * 0.05), 16000)
        b = C.Utterance("b", "s2", 0.2 * np.sin(np.arange(9000) * 0.02), 16000)
        corp = C.Corpus([a, b])
        noisy = M._augmented_utterance(a, M.AugmentConfig("babble", snr_db=5.0), corp, rng)
        assert noisy.samples.shape == a.samples.shape
        assert not np.array_equal(noisy.samples, a.samples)

    def test_training_with_augmentation_runs(self, rng, tmp_path):
        out = tmp_path / "aug"
        C.synth_corpus(C.SynthConfig(2, 3, phones_per_utt=8, seed=2), out)
        corp = C.load_corpus(out)
        net = M.build(M.desk_config(2), seed=1)
        hyper = M.TrainConfig(
            epochs=1, batch_size=8, seed=1, augment=M.AugmentConfig("white", 15.0),
            checkpoint_epochs=(1,),
        )
        ckpts = M.train(net, corp, hyper)
        assert ckpts[-1].epoch == 1
