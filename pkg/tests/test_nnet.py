"""Engine tests: layer math against finite differences, training behavior,
weight serialization."""

import numpy as np
import pytest

from gradcheck import TOLERANCE, check_layer
from towinspect.nnet import (ArchitectureMismatch, CAEModel, ChecksumMismatch,
                             Conv2d, ConvTranspose2d, Dense, NonFiniteActivation,
                             ReLU, Sigmoid, TrainConfig, WeightsFormatError,
                             load_weights, save_weights, train)
from towinspect.nnet.layers import ShapeMismatch
from towinspect.sampler import SampleLabel, SampleSet, WindowSample


def make_windows(n, seed=0, constant=None):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        if constant is not None:
            px = np.full((32, 32), constant, dtype=np.float32)
        else:
            px = rng.uniform(0.2, 0.8, (32, 32)).astype(np.float32)
        samples.append(WindowSample(px, 16 + 8 * i, 16, 0))
    return SampleSet(tuple(samples))


class TestLayerBasics:
    def test_1x1_identity_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        layer = Conv2d(1, 1, k=1, stride=1, pad=0, rng=rng, dtype=np.float64)
        layer.w[...] = 1.0
        layer.b[...] = 0.0
        x = rng.uniform(0, 1, (2, 1, 6, 6))
        assert np.allclose(layer.forward(x), x)

    def test_constant_input_interior_value(self):
        rng = np.random.default_rng(1)
        layer = Conv2d(1, 2, k=3, stride=1, pad=0, rng=rng, dtype=np.float64)
        layer.b[...] = (0.25, -0.5)
        x = np.full((1, 1, 8, 8), 3.0)
        y = layer.forward(x)
        for f in range(2):
            expected = layer.w[f].sum() * 3.0 + layer.b[f]
            assert np.allclose(y[0, f], expected)

    def test_shape_mismatch_raises(self):
        rng = np.random.default_rng(2)
        layer = Conv2d(3, 4, rng=rng)
        with pytest.raises(ShapeMismatch):
            layer.forward(np.zeros((1, 2, 8, 8), dtype=np.float32))
        dense = Dense(10, 4, rng=rng)
        with pytest.raises(ShapeMismatch):
            dense.forward(np.zeros((1, 9), dtype=np.float32))

    def test_conv_transpose_inverts_conv_shape(self):
        rng = np.random.default_rng(3)
        down = Conv2d(1, 4, rng=rng)
        up = ConvTranspose2d(4, 1, rng=rng)
        x = np.zeros((2, 1, 32, 32), dtype=np.float32)
        assert up.forward(down.forward(x)).shape == x.shape


class TestGradients:
    """Analytic vs central finite differences, float64, eps=1e-4."""

    @pytest.mark.parametrize("case", range(3))
    def test_conv2d(self, case):
        rng = np.random.default_rng(100 + case)
        layer = Conv2d(2, 3, k=3, stride=2, pad=1, rng=rng, dtype=np.float64)
        x = rng.standard_normal((2, 2, 6, 6))
        assert check_layer(layer, x, seed=case) <= TOLERANCE

    @pytest.mark.parametrize("case", range(3))
    def test_conv_transpose2d(self, case):
        rng = np.random.default_rng(200 + case)
        layer = ConvTranspose2d(2, 3, k=3, stride=2, pad=1, out_pad=1,
                                rng=rng, dtype=np.float64)
        x = rng.standard_normal((2, 2, 5, 5))
        assert check_layer(layer, x, seed=case) <= TOLERANCE

    @pytest.mark.parametrize("case", range(3))
    def test_dense(self, case):
        rng = np.random.default_rng(300 + case)
        layer = Dense(10, 7, rng=rng, dtype=np.float64)
        x = rng.standard_normal((4, 10))
        assert check_layer(layer, x, seed=case) <= TOLERANCE

    @pytest.mark.parametrize("case", range(3))
    def test_relu(self, case):
        rng = np.random.default_rng(400 + case)
        x = rng.standard_normal((2, 3, 5, 5))
        x = np.where(np.abs(x) < 0.1, 0.5, x)  # stay away from the kink
        assert check_layer(ReLU(), x, seed=case) <= TOLERANCE

    @pytest.mark.parametrize("case", range(3))
    def test_sigmoid(self, case):
        rng = np.random.default_rng(500 + case)
        x = rng.standard_normal((2, 3, 5, 5))
        assert check_layer(Sigmoid(), x, seed=case) <= TOLERANCE


class TestModel:
    def test_untrained_outputs_in_unit_interval(self):
        model = CAEModel(16, seed=0)
        x = np.random.default_rng(0).uniform(0, 1, (8, 1, 32, 32)).astype(np.float32)
        y = model.forward(x)
        assert np.isfinite(y).all()
        assert y.min() > 0.0 and y.max() < 1.0

    @pytest.mark.parametrize("latent", [2, 16, 128])
    def test_encode_length_matches_latent(self, latent):
        model = CAEModel(latent, seed=1)
        x = np.zeros((3, 1, 32, 32), dtype=np.float32)
        assert model.encode(x).shape == (3, latent)

    def test_decoder_mirrors_encoder_shapes(self):
        model = CAEModel(8, seed=0)
        x = np.zeros((1, 1, 32, 32), dtype=np.float32)

        def spatial_trace(layers, t):
            sizes = [t.shape[2]] if t.ndim == 4 else []
            for layer in layers:
                t = layer.forward(t)
                if t.ndim == 4 and (not sizes or t.shape[2] != sizes[-1]):
                    sizes.append(t.shape[2])
            return sizes, t

        down, latent = spatial_trace(model.encoder, x)
        up, out = spatial_trace(model.decoder, latent)
        assert down == [32, 16, 8, 4]
        assert up == list(reversed(down))
        assert out.shape == x.shape

    def test_non_finite_reports_layer(self):
        model = CAEModel(4, seed=0)
        model.encoder[2].w[0, 0, 0, 0] = np.nan
        x = np.full((1, 1, 32, 32), 0.5, dtype=np.float32)
        with pytest.raises(NonFiniteActivation) as exc:
            model.forward(x)
        assert exc.value.stage == "encoder"
        assert exc.value.layer_index == 2

    def test_rejects_wrong_window(self):
        model = CAEModel(4, seed=0)
        with pytest.raises(ShapeMismatch):
            model.forward(np.zeros((1, 1, 16, 16), dtype=np.float32))


class TestTraining:
    def test_overfits_constant_dataset(self):
        sset = make_windows(64, constant=0.35)
        model, history = train(CAEModel(4, seed=0), sset,
                               TrainConfig(epochs=40, batch_size=32, seed=0))
        y = model.forward(sset.pixel_stack()[:4][:, None])
        assert float(np.mean((y - 0.35) ** 2)) <= 1e-3

    def test_loss_decreases(self):
        sset = make_windows(128, seed=2)
        _, history = train(CAEModel(8, seed=0), sset,
                           TrainConfig(epochs=10, batch_size=64, seed=0))
        assert len(history) == 10
        assert all(np.isfinite(history))
        assert history[-1] < history[0]

    def test_zero_learning_rate_constant_history(self):
        sset = make_windows(96, seed=3)
        _, history = train(CAEModel(4, seed=1), sset,
                           TrainConfig(epochs=5, batch_size=32,
                                       learning_rate=0.0, seed=1))
        assert max(history) - min(history) <= 1e-12

    def test_same_seed_identical_histories(self):
        sset = make_windows(96, seed=4)
        conf = TrainConfig(epochs=4, batch_size=32, seed=9)
        _, h1 = train(CAEModel(8, seed=5), sset, conf)
        _, h2 = train(CAEModel(8, seed=5), sset, conf)
        assert h1 == h2

    def test_rejects_abnormal_training_samples(self):
        bad = WindowSample(np.zeros((32, 32), dtype=np.float32), 16, 16, 0,
                           SampleLabel.ABNORMAL)
        sset = SampleSet((bad,) + make_windows(8).samples)
        with pytest.raises(ValueError):
            train(CAEModel(4, seed=0), sset, TrainConfig(epochs=1, seed=0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1e-3)


class TestSerialization:
    def test_round_trip_forward_bitwise(self, tmp_path):
        sset = make_windows(64, seed=6)
        model, _ = train(CAEModel(8, seed=2), sset,
                         TrainConfig(epochs=2, batch_size=32, seed=2))
        model.meta = {"score_p99": 0.123}
        path = tmp_path / "weights.caew"
        save_weights(model, path)
        loaded = load_weights(path)
        assert loaded.meta == {"score_p99": 0.123}
        x = np.random.default_rng(8).uniform(0, 1, (4, 1, 32, 32)).astype(np.float32)
        assert np.array_equal(model.forward(x), loaded.forward(x))

    def test_truncated_blob_checksum(self, tmp_path):
        model = CAEModel(4, seed=0)
        path = tmp_path / "weights.caew"
        save_weights(model, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ChecksumMismatch):
            load_weights(path)

    def test_header_architecture_mismatch(self, tmp_path):
        import json
        model = CAEModel(4, seed=0)
        path = tmp_path / "weights.caew"
        save_weights(model, path)
        data = path.read_bytes()
        cut = data.index(b"\n")
        header = json.loads(data[:cut])
        header["arch"]["latent_dim"] = 8  # now disagrees with blob shapes
        path.write_bytes(json.dumps(header).encode() + data[cut:])
        with pytest.raises(ArchitectureMismatch):
            load_weights(path)

    def test_not_a_weight_file(self, tmp_path):
        path = tmp_path / "junk.caew"
        path.write_bytes(b'{"format": "something-else"}\nxxxx')
        with pytest.raises(WeightsFormatError):
            load_weights(path)
