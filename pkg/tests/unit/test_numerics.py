import numpy as np
import pytest

from src.errors import CheckpointError, DetachedGraphError, NonDeterministicLossError, NonFiniteError, NotScalarError
from src.numerics import (
    Adam,
    ParamSet,
    RngStream,
    Tensor,
    backward,
    finite_diff_grad,
    load_params,
    read_tensors,
    recording,
    relative_error,
    save_params,
    set_debug,
    write_tensors,
)
from src.numerics import functional as F


def _grad_check(loss_fn, params, tol=1e-6):
    with recording():
        analytic = backward(loss_fn(params), params)
    numeric = finite_diff_grad(loss_fn, params)
    errors = relative_error(analytic, numeric)
    assert max(errors.values()) <= tol, errors


def _params(**arrays):
    params = ParamSet()
    for name, values in arrays.items():
        params.add(name, values)
    return params


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_elementwise_and_reduction_grads(seed):
    rng = np.random.default_rng(seed)
    params = _params(a=rng.normal(size=(3, 4)), b=rng.normal(size=(4,)) + 3.0)

    def loss(p):
        x = F.div(F.mul(F.exp(p["a"]), F.sigmoid(p["a"])), p["b"])
        y = F.sub(F.softplus(x), F.log(F.add(F.gelu(p["b"]), 5.0)))
        return F.mean(F.add(F.neg(y), F.sum(F.softmax(x, axis=-1), axis=0)))

    _grad_check(loss, params)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matmul_layer_norm_and_indexing_grads(seed):
    rng = np.random.default_rng(seed)
    params = _params(x=rng.normal(size=(5, 6)), w=rng.normal(size=(6, 6)), g=rng.normal(size=6), b=rng.normal(size=6))

    def loss(p):
        h = F.layer_norm(F.matmul(p["x"], p["w"]), p["g"], p["b"])
        rows = F.take_rows(h, np.array([0, 2, 2, 4]))
        parts = F.concat([F.getitem(rows, slice(0, 2)), F.transpose(F.reshape(h, (6, 5)), (1, 0))], axis=0)
        return F.sum(F.mul(parts, parts))

    _grad_check(loss, params)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv_pool_resize_rotary_grads(seed):
    rng = np.random.default_rng(seed)
    params = _params(x=rng.normal(size=(2, 3, 8, 8)), w=rng.normal(size=(4, 3, 3, 3)), b=rng.normal(size=4))
    cos, sin = np.cos(rng.normal(size=(8, 4))), np.sin(rng.normal(size=(8, 4)))

    def loss(p):
        h = F.conv2d(p["x"], p["w"], p["b"])
        h = F.resize(F.avg_pool2d(h, 2), 6, mode="bilinear")
        flat = F.reshape(h, (2 * 4 * 6, 6))
        rotated = F.rotary(F.getitem(flat, slice(0, 8)), cos[:, :3], sin[:, :3])
        return F.add(F.sum(F.mul(rotated, rotated)), F.mean(F.resize(h, 12, mode="area")))

    _grad_check(loss, params)


def test_average_patches_matches_brute_force():
    rng = np.random.default_rng(3)
    patches = rng.normal(size=(5, 4, 4))
    boxes = [(0, 0, 4), (2, 2, 4), (8, 8, 4), (2, 0, 4), (0, 6, 4)]
    out, coverage = F.average_patches(patches, boxes, 12)
    for y in range(12):
        for x in range(12):
            hits = [patches[k][y - y0, x - x0] for k, (y0, x0, s) in enumerate(boxes) if y0 <= y < y0 + s and x0 <= x < x0 + s]
            assert coverage[y, x] == bool(hits)
            expected = sum(hits) / len(hits) if hits else 0.0
            assert abs(out.numpy()[y, x] - expected) <= 1e-12


def test_interpolation_matrices_are_row_stochastic():
    for mode in ("bilinear", "nearest", "area"):
        for n_in, n_out in [(4, 8), (8, 4), (6, 16), (16, 6)]:
            m = F.interpolation_matrix(n_in, n_out, mode)
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)


def test_area_downsample_is_block_mean():
    x = np.arange(16.0).reshape(4, 4)
    np.testing.assert_allclose(F.resize_array(x, 2, "area"), [[2.5, 4.5], [10.5, 12.5]])


def test_backward_requires_scalar_and_tape():
    params = _params(a=np.ones(3))
    with recording():
        with pytest.raises(NotScalarError):
            backward(F.mul(params["a"], 2.0), params)
    with pytest.raises(DetachedGraphError):
        backward(F.sum(params["a"]), params)


def test_unused_parameter_gets_zero_gradient():
    params = _params(a=np.ones(3), unused=np.ones(2))
    with recording():
        grads = backward(F.sum(F.mul(params["a"], params["a"])), params)
    np.testing.assert_array_equal(grads["unused"].numpy(), np.zeros(2))
    np.testing.assert_array_equal(grads["a"].numpy(), np.full(3, 2.0))


def test_debug_mode_flags_non_finite_values():
    set_debug(True)
    try:
        with pytest.raises(NonFiniteError):
            F.log(Tensor(np.array([-1.0])))
    finally:
        set_debug(False)


def test_finite_diff_rejects_nondeterministic_loss():
    params = _params(a=np.ones(2))
    draws = iter(range(100))
    with pytest.raises(NonDeterministicLossError):
        finite_diff_grad(lambda p: float(next(draws)), params)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(4)
    params = _params(w=rng.normal(size=(3, 2, 2)), b=rng.normal(size=2), s=np.asarray(np.pi))
    path = save_params(tmp_path / "p.pckt", params)
    blob = path.read_bytes()
    assert blob.startswith(b"PCKT1")

    restored = _params(w=np.zeros((3, 2, 2)), b=np.zeros(2), s=np.asarray(0.0))
    load_params(path, restored)
    for name, tensor in params.items():
        assert restored[name].numpy().tobytes() == tensor.numpy().tobytes()
    save_params(tmp_path / "again.pckt", restored)
    assert (tmp_path / "again.pckt").read_bytes() == blob


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        read_tensors(tmp_path / "missing.pckt")
    bad = tmp_path / "bad.pckt"
    bad.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError):
        read_tensors(bad)
    write_tensors(tmp_path / "t.pckt", {"x": np.ones(4)})
    truncated = tmp_path / "trunc.pckt"
    truncated.write_bytes((tmp_path / "t.pckt").read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        read_tensors(truncated)
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "t.pckt", _params(y=np.ones(4)))


def test_adam_state_round_trip(tmp_path):
    params = _params(a=np.array([1.0, -2.0]))
    opt = Adam(params, lr=0.1)
    with recording():
        grads = backward(F.sum(F.mul(params["a"], params["a"])), params)
    opt.step(grads)
    opt.save(tmp_path / "opt.pckt")

    other = Adam(params.copy(), lr=0.1)
    other.load(tmp_path / "opt.pckt")
    assert other.t == 1
    np.testing.assert_array_equal(other.m["a"], opt.m["a"])
    np.testing.assert_array_equal(other.v["a"], opt.v["a"])


def test_rng_streams_are_reproducible_and_independent():
    a = RngStream(7, 1).child(3).uniform(5)
    b = RngStream(7, 1).child(3).uniform(5)
    c = RngStream(7, 1).child(4).uniform(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all((a > 0) & (a < 1))
    with pytest.raises(ValueError):
        RngStream(-1)


def test_sibling_streams_are_uncorrelated():
    n = 20_000
    root = RngStream(11, 2)
    draws = np.stack([root.child(i).uniform(n) for i in range(6)] + [RngStream(11, 3).child(0).uniform(n)])
    corr = np.corrcoef(draws)
    off_diagonal = corr[~np.eye(len(draws), dtype=bool)]
    assert np.abs(off_diagonal).max() < 0.04
    assert np.abs(draws.mean(axis=1) - 0.5).max() < 0.01
    gumbel = root.child(9).gumbel(n)
    assert gumbel.mean() == pytest.approx(np.euler_gamma, abs=0.03)
