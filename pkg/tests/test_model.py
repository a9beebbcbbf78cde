import math

import numpy as np
import pytest

from pareto_pinn.model import (NetworkConfig, NetworkParams, forward, glorot_bound, init, load_checkpoint,
                               save_checkpoint)
from pareto_pinn.problems import HeatProblem, sample
from pareto_pinn.training import Objective


def test_glorot_bounds():
    assert glorot_bound(50, 50) == pytest.approx(0.24495, abs=1e-5)
    assert glorot_bound(2, 50) == pytest.approx(0.33968, abs=1e-5)


def test_init_shapes_and_ranges():
    cfg = NetworkConfig(2, 3)
    p = init(cfg, 7)
    assert cfg.layer_sizes == [2, 50, 50, 50, 50, 3]
    assert [w.shape for w in p.weights] == [(50, 2), (50, 50), (50, 50), (50, 50), (3, 50)]
    for w, (fi, fo) in zip(p.weights, zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:])):
        assert np.all(np.abs(w) <= glorot_bound(fi, fo))
    assert all(np.all(b == 0) for b in p.biases)
    assert p.slope_a is None


def test_init_deterministic_per_seed():
    cfg = NetworkConfig(2, 1)
    a, b, c = init(cfg, 1), init(cfg, 1), init(cfg, 2)
    assert np.array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), c.flat())


def test_adaptive_init_slope():
    cfg = NetworkConfig(2, 1, adaptive_activation=True, scale_factor_n=5.0)
    p = init(cfg, 0)
    assert p.slope_a == pytest.approx(0.2)
    assert cfg.scale_factor_n * p.slope_a == 1.0


@pytest.mark.parametrize("kwargs", [
    dict(input_dim=0, output_dim=1),
    dict(input_dim=2, output_dim=1, hidden_layers=0),
    dict(input_dim=2, output_dim=1, hidden_width=0),
    dict(input_dim=2, output_dim=1, adaptive_activation=True, scale_factor_n=0.0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        NetworkConfig(**kwargs)


def test_params_validation():
    cfg = NetworkConfig(2, 1, hidden_layers=1, hidden_width=3)
    with pytest.raises(ValueError):
        NetworkParams(cfg, [np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])
    with pytest.raises(ValueError):
        NetworkParams(cfg, [np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)], slope_a=0.2)


def test_zero_network_outputs_bias_of_last_layer():
    cfg = NetworkConfig(2, 3, hidden_layers=2, hidden_width=4)
    p = NetworkParams.from_flat(cfg, np.zeros(init(cfg, 0).flat().size))
    p.biases[-1][:] = [1.0, -2.0, 0.5]
    out = forward(p, np.random.default_rng(0).normal(size=(5, 2)))
    assert np.array_equal(out, np.tile([1.0, -2.0, 0.5], (5, 1)))


def test_forward_single_point_shape():
    p = init(NetworkConfig(2, 3), 0)
    assert forward(p, [0.1, 0.2]).shape == (3,)
    assert forward(p, [[0.1, 0.2]]).shape == (1, 3)
    with pytest.raises(ValueError):
        forward(p, [[0.1, 0.2, 0.3]])


@pytest.mark.parametrize("adaptive", [False, True])
def test_checkpoint_round_trip(tmp_path, adaptive):
    cfg = NetworkConfig(2, 3, hidden_layers=2, hidden_width=7, adaptive_activation=adaptive)
    p = init(cfg, 4)
    path = tmp_path / "ck.bin"
    save_checkpoint(p, path)
    q = load_checkpoint(path)
    assert q.config == cfg
    assert np.array_equal(p.flat(), q.flat())
    assert load_checkpoint(path, cfg).config == cfg


def test_checkpoint_payload_layout(tmp_path):
    cfg = NetworkConfig(1, 1, hidden_layers=1, hidden_width=2, adaptive_activation=True)
    p = NetworkParams(cfg, [np.array([[1.0], [2.0]]), np.array([[3.0, 4.0]])],
                      [np.array([5.0, 6.0]), np.array([7.0])], 0.25)
    path = tmp_path / "ck.bin"
    save_checkpoint(p, path)
    raw = path.read_bytes()
    payload = np.frombuffer(raw[raw.index(b"\n") + 1:], dtype="<f8")
    assert payload.tolist() == [1, 2, 5, 6, 3, 4, 7, 0.25]


def test_checkpoint_errors(tmp_path):
    cfg = NetworkConfig(2, 1, hidden_layers=1, hidden_width=3)
    path = tmp_path / "ck.bin"
    save_checkpoint(init(cfg, 0), path)
    with pytest.raises(ValueError):
        load_checkpoint(path, NetworkConfig(2, 1, hidden_layers=1, hidden_width=4))
    truncated = tmp_path / "short.bin"
    truncated.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(truncated)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(ValueError):
        load_checkpoint(bad)


def test_adaptive_slope_at_unit_gain_matches_plain_network_bitwise():
    prob = HeatProblem(n_ic=20, n_bc=20, n_col=50, n_test=20)
    base = NetworkConfig(2, 1)
    params = init(base, 11)
    cfg = NetworkConfig(2, 1, adaptive_activation=True)
    scaled = NetworkParams(cfg, params.weights, params.biases, 1.0 / cfg.scale_factor_n)
    bundle = sample(prob, 0)
    assert Objective(prob, bundle, base).losses(params.to_dict()) == \
        Objective(prob, bundle, cfg).losses(scaled.to_dict())
    x = bundle.test_points
    assert np.array_equal(forward(params, x), forward(scaled, x))


def test_flat_round_trip():
    cfg = NetworkConfig(2, 3, hidden_layers=3, hidden_width=5, adaptive_activation=True)
    p = init(cfg, 9)
    q = NetworkParams.from_flat(cfg, p.flat())
    assert np.array_equal(p.flat(), q.flat())
    assert p.flat().size == sum(a * b + b for a, b in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:])) + 1
    with pytest.raises(ValueError):
        NetworkParams.from_flat(cfg, p.flat()[:-1])
    assert math.isclose(q.slope_a, 0.2)
