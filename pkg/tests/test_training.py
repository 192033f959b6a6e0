"""Training loop behavior, crops, and checkpoint averaging."""

import numpy as np
import pytest

from diar import checkpoint
from diar.autodiff import Parameter, Tensor
from diar.encoder import EncoderConfig
from diar.errors import InputError, NumericsError
from diar.model import DiarizationModel
from diar.scoring import InferenceConfig
from diar.simulate import make_dataset
from diar.ta import CombinerKind, TaConfig
from diar.training import TrainConfig, average_checkpoints, evaluate, make_crop, train


def tiny_model(seed=0, max_speakers=2):
    encoder = EncoderConfig(
        num_blocks=1,
        model_dim=16,
        heads=2,
        ff_dim=32,
        conv_kernel=3,
        use_csv_token=True,
        dropout=0.0,
        input_dim=23,
    )
    ta = TaConfig(
        num_decoder_layers=1,
        heads=2,
        ff_dim=32,
        combiner=CombinerKind("amp", 1.0),
        max_speakers=max_speakers,
        dropout=0.0,
    )
    return DiarizationModel("ta", encoder, ta_cfg=ta, seed=seed)


def tiny_dataset(n=6, seed=0, duration=8.0):
    return make_dataset(
        n, speaker_range=(1, 2), betas={1: 2.0, 2: 2.0}, seed=seed, duration_s=duration
    )


class TestMakeCrop:
    def test_long_input_is_windowed(self, rng):
        features = rng.normal(size=(23, 50))
        labels = (rng.random((50, 2)) < 0.5).astype(int)
        f, l, mask = make_crop(features, labels, 20, rng)
        assert f.shape == (23, 20)
        assert l.shape == (20, 2)
        assert mask.sum() == 20

    def test_short_input_zero_padded_and_masked(self, rng):
        features = rng.normal(size=(23, 7))
        labels = (rng.random((7, 2)) < 0.5).astype(int)
        f, l, mask = make_crop(features, labels, 12, rng)
        assert f.shape == (23, 12)
        assert np.all(f[:, 7:] == 0.0)
        assert np.all(l[7:] == 0)
        np.testing.assert_array_equal(mask, [1] * 7 + [0] * 5)


class TestTrainLoop:
    def test_zero_epochs_changes_nothing(self, tmp_path):
        model = tiny_model()
        before = {k: v.copy() for k, v in model.state_dict().items()}
        result = train(
            model, tiny_dataset(2), [], TrainConfig(epochs=0), tmp_path
        )
        assert result.metrics == []
        after = model.state_dict()
        for k in before:
            np.testing.assert_array_equal(before[k], after[k])

    def test_bit_identical_reruns(self, tmp_path):
        data = tiny_dataset(1)
        cfg = TrainConfig(epochs=1, lr=1e-3, seed=7, crop_frames=40)
        paths = []
        for run in ("one", "two"):
            model = tiny_model(seed=5)
            train(model, data, [], cfg, tmp_path / run)
            paths.append(tmp_path / run / "checkpoint_0001.ckpt")
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_loss_decreases_on_toy_set(self, tmp_path):
        model = tiny_model(seed=1)
        data = [m for m in tiny_dataset(12, seed=3) if m.true_num_speakers == 2][:6]
        cfg = TrainConfig(epochs=40, lr=3e-3, seed=0, crop_frames=80, batch_size=3,
                          checkpoint_interval=0)
        result = train(model, data, [], cfg, tmp_path)
        first = result.metrics[0].diar_loss
        last = result.metrics[-1].diar_loss
        assert last < 0.7 * first, f"diar loss {first} -> {last}"

    def test_metrics_log_format(self, tmp_path):
        model = tiny_model()
        train(model, tiny_dataset(2), tiny_dataset(1, seed=9),
              TrainConfig(epochs=2, crop_frames=40), tmp_path)
        lines = (tmp_path / "metrics.tsv").read_text().strip().splitlines()
        assert lines[0] == "epoch\tdiar_loss\texist_loss\ttotal\tval_der"
        assert len(lines) == 3
        for line in lines[1:]:
            fields = line.split("\t")
            assert len(fields) == 5
            int(fields[0])
            [float(x) for x in fields[1:]]

    def test_checkpoints_written_per_interval(self, tmp_path):
        model = tiny_model()
        result = train(
            model, tiny_dataset(2), [],
            TrainConfig(epochs=4, crop_frames=40, checkpoint_interval=2), tmp_path
        )
        assert [p.name for p in result.checkpoint_paths] == [
            "checkpoint_0002.ckpt",
            "checkpoint_0004.ckpt",
        ]

    def test_empty_dataset_rejected(self, tmp_path):
        with pytest.raises(InputError):
            train(tiny_model(), [], [], TrainConfig(epochs=1), tmp_path)

    def test_divergence_aborts_with_diagnostic(self, tmp_path):
        class ExplodingModel:
            def __init__(self):
                self.param = Parameter(np.ones((2, 2)))

            def parameters(self):
                return [self.param]

            def train(self):
                return self

            def forward_train(self, features, labels, lambda_exist, frame_mask):
                from diar.model import TrainStepOutput

                bad = Tensor(np.array(np.nan))
                return TrainStepOutput(bad, bad, bad, bad, bad, (0,))

        with pytest.raises(NumericsError) as err:
            train(ExplodingModel(), tiny_dataset(1), [], TrainConfig(epochs=1), tmp_path)
        assert "diverged" in str(err.value)


class TestEvaluate:
    def test_runs_inference_and_scores(self):
        model = tiny_model(max_speakers=2)
        data = tiny_dataset(3, seed=4)
        report, scores, (refs, hyps) = evaluate(model, data, InferenceConfig())
        assert len(scores) == 3
        assert len(refs) == len(hyps) == 3
        assert report.der >= 0.0


class TestAverageCheckpoints:
    def test_k_one_returns_best(self, tmp_path, rng):
        states = [{"w": rng.normal(size=(3,))} for _ in range(3)]
        paths = []
        for i, state in enumerate(states):
            p = tmp_path / f"c{i}.ckpt"
            checkpoint.save_arrays(state, p)
            paths.append(p)
        averaged = average_checkpoints(paths, 1, [0.5, 0.1, 0.9])
        np.testing.assert_array_equal(averaged["w"], states[1]["w"])

    def test_opposite_parameters_average_to_zero(self, tmp_path, rng):
        theta = rng.normal(size=(4, 2))
        pa, pb = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        checkpoint.save_arrays({"w": theta}, pa)
        checkpoint.save_arrays({"w": -theta}, pb)
        averaged = average_checkpoints([pa, pb], 2, [0.3, 0.4])
        np.testing.assert_allclose(averaged["w"], 0.0, atol=1e-16)

    def test_k_best_of_five_matches_external_mean(self, tmp_path, rng):
        states = [{"w": rng.normal(size=(5,))} for _ in range(5)]
        scores = [0.5, 0.2, 0.9, 0.1, 0.3]
        paths = []
        for i, state in enumerate(states):
            p = tmp_path / f"c{i}.ckpt"
            checkpoint.save_arrays(state, p)
            paths.append(p)
        averaged = average_checkpoints(paths, 3, scores)
        # lowest scores: indices 3 (0.1), 1 (0.2), 4 (0.3)
        expected = (states[3]["w"] + states[1]["w"] + states[4]["w"]) / 3.0
        np.testing.assert_allclose(averaged["w"], expected, atol=1e-15)

    def test_too_few_checkpoints_rejected(self, tmp_path, rng):
        p = tmp_path / "c.ckpt"
        checkpoint.save_arrays({"w": rng.normal(size=(2,))}, p)
        with pytest.raises(InputError) as err:
            average_checkpoints([p], 2, [0.1])
        assert "1" in str(err.value)
