import numpy as np
import pytest

from leakyuq.exceptions import DimensionError, ParseError
from leakyuq.linearization import (
    SensitivityModel,
    jacobian_chain,
    jacobian_chain_face_split,
    linear_predict,
    load_model,
    save_model,
    sensitivity,
)
from leakyuq.network import FeedForwardNet, forward, init_net


class TestJacobian:
    def test_reference_fixture(self, reference_net, reference_io):
        model = sensitivity(reference_net, reference_io["mu"], 1.0)
        np.testing.assert_allclose(model.Q, reference_io["Q"], atol=1e-12)
        np.testing.assert_allclose(model.m, forward(reference_net, reference_io["mu"]), atol=1e-15)

    def test_face_split_form_agrees(self, net3, mu31):
        np.testing.assert_allclose(jacobian_chain_face_split(net3, mu31), jacobian_chain(net3, mu31), atol=1e-14)

    def test_finite_differences(self, net3, mu31):
        Q = sensitivity(net3, mu31, 1.0).Q
        eps = 1e-7
        for k in (0, 10, 30):
            e = np.zeros(31)
            e[k] = eps
            fd = (forward(net3, mu31 + e) - forward(net3, mu31 - e)) / (2 * eps)
            np.testing.assert_allclose(fd, Q[:, k], atol=1e-7)

    def test_one_layer_closed_form(self):
        W = np.array([[2.0, -1.0], [1.0, 1.0]])
        net = FeedForwardNet([(W, np.array([0.0, -5.0]))], np.array([[1.0, 3.0]]))
        mu = np.array([1.0, 0.5])
        # h = (1.5, -3.5): the second unit sits on the alpha branch.
        expected = np.array([[1.0, 3.0]]) @ (np.array([[1.0], [0.01]]) * W)
        np.testing.assert_allclose(sensitivity(net, mu, 1.0).Q, expected, atol=1e-15)


class TestLinearPredict:
    def test_exact_without_sign_flips(self, net3, mu31, rng):
        model = sensitivity(net3, mu31, 1e-9)
        Z = rng.uniform(-1e-9, 1e-9, (20, 31))
        np.testing.assert_allclose(linear_predict(model, Z), forward(net3, mu31 + Z), atol=1e-13)

    def test_resnet_adds_identity(self, rng):
        net = init_net(5, 7, 2, architecture="resnet", seed=3)
        net.A[:] = 0.0
        mu = rng.standard_normal(5)
        model = sensitivity(net, mu, 0.5)
        np.testing.assert_array_equal(model.Q, np.eye(5))
        np.testing.assert_array_equal(model.m, mu)

    def test_kink_flag(self):
        net = FeedForwardNet([(np.array([[1.0]]), np.array([0.0]))], np.array([[1.0]]))
        assert "kink" in sensitivity(net, [0.0], 1.0).flags
        assert sensitivity(net, [1.0], 1.0).flags == ()

    def test_dimension_errors(self, net3, mu31):
        with pytest.raises(DimensionError):
            sensitivity(net3, mu31[:5], 1.0)
        model = sensitivity(net3, mu31, 1.0)
        with pytest.raises(DimensionError):
            linear_predict(model, np.zeros(4))


class TestSensitivityModel:
    def test_beta_vector(self):
        model = SensitivityModel(np.zeros(2), np.ones((2, 3)), 0.5)
        np.testing.assert_array_equal(model.beta_vector, [0.5, 0.5, 0.5])
        with pytest.raises(DimensionError):
            SensitivityModel(np.zeros(2), np.ones((2, 3)), [0.1, 0.2])

    def test_round_trip(self, tmp_path, net3, mu31):
        model = sensitivity(net3, mu31, 0.25)
        path = tmp_path / "m.json"
        save_model(model, path)
        back = load_model(path)
        np.testing.assert_array_equal(back.Q, model.Q)
        np.testing.assert_array_equal(back.m, model.m)
        assert back.beta == 0.25

    def test_bad_file(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"m": [1], "Q": [[1, 2], [3]]}')
        with pytest.raises(ParseError):
            load_model(path)
