"""Spline basis, transformer mechanics, and model gradient checks."""

import numpy as np
import pytest

from irkit import nets
from irkit.errors import ConfigError, DomainError, NumericFault, ShapeError
from irkit.numcore import Rng, Tensor, backward

SMALL = nets.NetConfig(
    embed_dim=8, heads=2, layers=1, ff_mult=2, mlp_hidden=8, mlp_cat_dim=3,
    grid_size=4, seed=11,
)


def batch(n=6, k_num=3, cards=(2, 4), seed=1):
    rng = Rng(seed)
    num = rng.normal(size=(n, k_num))
    cat = np.column_stack(
        [rng.integers(0, c, size=n) for c in cards]
    ) if cards else np.zeros((n, 0), dtype=np.int64)
    return num, cat


# ---------------------------------------------------------------------------
# B-spline basis


def test_basis_counts():
    x = np.linspace(-3, 3, 7)
    for order, nb in [(1, 8), (2, 9), (3, 10)]:
        assert nets.bspline_basis(x, order=order).shape == (7, nb)


def test_partition_of_unity_including_knots_and_edges():
    knots = -3.0 + 0.75 * np.arange(9)
    x = np.concatenate([np.linspace(-3, 3, 301), knots])
    for order in (1, 2, 3, 4):
        B = nets.bspline_basis(x, order=order)
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-10)
        assert B.min() >= 0.0


def test_order_one_is_interval_indicator():
    B = nets.bspline_basis([-2.9, 0.1, 3.0], order=1)
    assert B.shape == (3, 8)
    assert B[0].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]
    assert B[1].tolist() == [0, 0, 0, 0, 1, 0, 0, 0]
    assert B[2].tolist() == [0, 0, 0, 0, 0, 0, 0, 1]  # right edge closed


def test_order_two_hats_peak_at_knots():
    knots = -3.0 + 0.75 * np.arange(9)
    B = nets.bspline_basis(knots, order=2)
    np.testing.assert_allclose(B, np.eye(9), atol=1e-12)


def test_derivative_matches_central_difference():
    # points clear of knots: central differences of a quadratic are exact
    x = -3.0 + 0.75 * np.arange(8) + 0.2
    eps = 1e-6
    B, d = nets.bspline_basis_and_deriv(x, order=3)
    hi = nets.bspline_basis(x + eps, order=3)
    lo = nets.bspline_basis(x - eps, order=3)
    np.testing.assert_allclose(d, (hi - lo) / (2 * eps), atol=1e-6)
    np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-9)


def test_derivative_nonzero_at_grid_edge():
    _, d = nets.bspline_basis_and_deriv([3.0], order=3)
    assert np.abs(d).max() > 0.1


def test_basis_rejects_bad_grid():
    with pytest.raises(ConfigError):
        nets.bspline_basis([0.0], order=0)
    with pytest.raises(ConfigError):
        nets.bspline_basis([0.0], grid_min=1.0, grid_max=-1.0)


# ---------------------------------------------------------------------------
# spline tokens


def test_kan_tokens_shape_and_linear_extrapolation():
    net = nets.build_model("tab_kanet", 1, (), 1, SMALL)
    net.kan_wb.value[:] = 0.0  # silence the SiLU skip; splines alone extrapolate linearly
    xs = np.array([[3.0], [3.5], [4.0], [-3.0], [-3.5], [-4.0]])
    tokens = net.numeric_tokens(xs).value
    assert tokens.shape == (6, 1, SMALL.embed_dim)
    up = tokens[2] - tokens[1]
    low = tokens[1] - tokens[0]
    np.testing.assert_allclose(up, low, atol=1e-9)  # same slope beyond +3
    np.testing.assert_allclose(
        tokens[5] - tokens[4], tokens[4] - tokens[3], atol=1e-9
    )


def test_kan_tokens_continuous_at_edge():
    net = nets.build_model("tab_kanet", 1, (), 1, SMALL)
    t = net.numeric_tokens(np.array([[3.0], [3.0 + 1e-9]])).value
    np.testing.assert_allclose(t[0], t[1], atol=1e-6)


def test_token_count_is_nine_for_full_feature_set():
    net = nets.build_model("tab_kanet", 7, (2, 5), 2, nets.NetConfig())
    assert net.token_count == 9
    num, cat = batch(n=4, k_num=7, cards=(2, 5))
    net.forward(num, cat)
    assert net.blocks[0].last_attn.shape == (4, 8, 9, 9)


# ---------------------------------------------------------------------------
# transformer mechanics


def test_attention_rows_are_stochastic():
    net = nets.build_model("tab_kanet", 3, (2, 4), 2, SMALL)
    num, cat = batch()
    net.forward(num, cat)
    for block in net.blocks:
        sums = block.last_attn.sum(axis=-1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        assert block.last_attn.min() >= 0.0


def test_zeroed_projections_make_identity_block():
    store = nets._ParamStore(seed=3)
    block = nets.TransformerBlock(store, "b", dim=8, heads=2, ff_mult=2)
    for attr in (block.wo, block.ff2):
        attr.w.value[:] = 0.0
        attr.b.value[:] = 0.0
    x = Tensor(Rng(5).normal(size=(4, 3, 8)))
    out = block(x)
    np.testing.assert_array_equal(out.value, x.value)


def test_batch_size_independence():
    net = nets.build_model("tab_kanet", 3, (2, 4), 2, SMALL)
    num, cat = batch(n=6)
    full = net.forward(num, cat).value
    for i in range(6):
        single = net.forward(num[i : i + 1], cat[i : i + 1]).value
        np.testing.assert_allclose(full[i], single[0], atol=1e-12)


# ---------------------------------------------------------------------------
# gradients: analytic vs central differences through whole models


def max_param_fd_error(net, num, cat, coords_per_param=4, eps=1e-5, seed=0):
    def loss_value() -> float:
        out = net.forward(num, cat)
        return float(((out * 0.1) ** 2).sum().value)

    loss = (net.forward(num, cat) * 0.1) ** 2
    backward(loss.sum())
    rng = Rng(seed)
    worst = 0.0
    for name, p in net.named_parameters():
        grad = np.zeros_like(p.value) if p.grad is None else p.grad
        flat = p.value.ravel()
        take = min(coords_per_param, flat.size)
        for i in rng.choice(flat.size, size=take, replace=False):
            keep = flat[i]
            flat[i] = keep + eps
            hi = loss_value()
            flat[i] = keep - eps
            lo = loss_value()
            flat[i] = keep
            numeric = (hi - lo) / (2 * eps)
            analytic = grad.ravel()[i]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


@pytest.mark.parametrize("kind", nets.NET_KINDS)
def test_gradients_match_finite_differences(kind):
    net = nets.build_model(kind, 3, (2, 4), 2, SMALL)
    num, cat = batch(seed=9)
    assert max_param_fd_error(net, num, cat) < 1e-4


def test_gradients_regression_head():
    net = nets.build_model("tab_kanet", 3, (2, 4), 1, SMALL)
    num, cat = batch(seed=13)
    assert max_param_fd_error(net, num, cat) < 1e-4


# ---------------------------------------------------------------------------
# model surface


def test_build_model_validation():
    with pytest.raises(ConfigError):
        nets.build_model("resnet", 3, (), 2)
    with pytest.raises(ConfigError):
        nets.NetConfig(embed_dim=10, heads=3)
    with pytest.raises(ConfigError):
        nets.build_model("mlp", 0, (), 2, SMALL)
    with pytest.raises(ConfigError):
        nets.build_model("mlp", 3, (0,), 2, SMALL)


def test_forward_validates_batches():
    net = nets.build_model("mlp", 3, (2,), 2, SMALL)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 4)), np.zeros((2, 1), dtype=int))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 3)), np.zeros((3, 1), dtype=int))
    with pytest.raises(DomainError):
        net.forward(np.zeros((2, 3)), np.array([[2], [0]]))
    with pytest.raises(DomainError):
        net.forward(np.full((2, 3), np.nan), np.zeros((2, 1), dtype=int))


def test_nonfinite_weights_fault_names_the_stage():
    net = nets.build_model("mlp", 3, (2,), 2, SMALL)
    net.l1.w.value[0, 0] = np.inf
    num, cat = batch(k_num=3, cards=(2,))
    with pytest.raises(NumericFault, match="hidden1"):
        net.forward(num, cat)


def test_predict_ranges():
    num, cat = batch(n=20)
    clf = nets.build_model("tab_transformer", 3, (2, 4), 2, SMALL)
    p = clf.predict(num, cat)
    assert p.shape == (20,)
    assert np.all((p > 0) & (p < 1))
    reg = nets.build_model("mlp", 3, (2, 4), 1, SMALL)
    v = reg.predict(num, cat)
    assert v.shape == (20,)


def test_same_seed_same_init():
    a = nets.build_model("tab_kanet", 3, (2,), 2, SMALL)
    b = nets.build_model("tab_kanet", 3, (2,), 2, SMALL)
    for (na, pa), (nb_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb_
        np.testing.assert_array_equal(pa.value, pb.value)


# ---------------------------------------------------------------------------
# serialization


def test_save_load_round_trip(tmp_path):
    net = nets.build_model("tab_kanet", 3, (2, 4), 2, SMALL)
    num, cat = batch()
    before = net.predict(num, cat)
    path = tmp_path / "net.bin"
    nets.save_net(net, path)
    clone = nets.load_net(path)
    assert clone.kind == "tab_kanet"
    np.testing.assert_array_equal(clone.predict(num, cat), before)


def test_load_rejects_truncated_blob(tmp_path):
    net = nets.build_model("mlp", 3, (2,), 2, SMALL)
    path = tmp_path / "net.bin"
    nets.save_net(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ConfigError, match="truncated"):
        nets.load_net(path)
