"""Winograd engine: transforms, tiled convolution, tile streaming, checks."""

import numpy as np
import pytest

from winophot.winograd import (CheckResult, FeatureMap, FilterBank,
                               WinogradPlan, complexity_reduction,
                               conv2d_direct, ewmm, inverse_transform,
                               make_plan, oracle_check, plan_identity_error,
                               tile_stream, transform_filter, transform_input,
                               winograd_conv2d)

PLANS = [(2, 3), (4, 3)]


# ---------------------------------------------------------------------------
# plans and the bilinear identity


@pytest.mark.parametrize("m,r", PLANS)
def test_plan_shapes(m, r):
    plan = make_plan(m, r)
    n = m + r - 1
    assert plan.n == n
    assert plan.At.shape == (m, n)
    assert plan.Bt.shape == (n, n)
    assert plan.G.shape == (n, r)


def test_unsupported_plan_rejected():
    with pytest.raises(ValueError, match="unsupported plan"):
        make_plan(3, 3)
    with pytest.raises(ValueError, match="unsupported plan"):
        make_plan(4, 5)


@pytest.mark.parametrize("m,r", PLANS)
def test_plan_identity_error_tiny(m, r):
    assert plan_identity_error(make_plan(m, r)) <= 1e-12


@pytest.mark.parametrize("m,r", PLANS)
def test_1d_identity_random_sweep(m, r):
    # At . ((G w) * (Bt d)) must equal the valid correlation of d with w
    plan = make_plan(m, r)
    rng = np.random.default_rng(101)
    for _ in range(1000):
        w = rng.uniform(-2, 2, size=r)
        d = rng.uniform(-2, 2, size=plan.n)
        lhs = plan.At @ ((plan.G @ w) * (plan.Bt @ d))
        ref = np.correlate(d, w, mode="valid")
        assert np.max(np.abs(lhs - ref)) < 1e-12


def test_f23_input_transform_known_vector():
    plan = make_plan(2, 3)
    got = plan.Bt @ np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(got, [-2.0, 5.0, 1.0, -2.0], atol=0.0)


def test_f23_inverse_transform_known_vector():
    plan = make_plan(2, 3)
    got = plan.At @ np.array([-2.0, 7.5, 0.5, -2.0])
    assert np.allclose(got, [6.0, 9.0], atol=0.0)
    # dropping the last summand (a classic transcription slip) would give 10
    bad = got.copy()
    bad[1] = plan.At[1, :3] @ np.array([-2.0, 7.5, 0.5])
    assert bad[1] != pytest.approx(9.0)


def test_f23_filter_transform_known_values():
    plan = make_plan(2, 3)
    u_ones = transform_filter(plan, np.ones((3, 3)))
    assert u_ones[1, 1] == pytest.approx(9.0 / 4.0, abs=0.0)
    # a unit impulse at (0, 0) isolates the first column of G
    impulse = np.zeros((3, 3))
    impulse[0, 0] = 1.0
    u_imp = transform_filter(plan, impulse)
    col0 = plan.G[:, 0]
    assert np.allclose(u_imp, np.outer(col0, col0), atol=0.0)
    assert np.allclose(col0, [1.0, 0.5, 0.5, 0.0])


@pytest.mark.parametrize("m,r", PLANS)
def test_single_tile_pipeline_matches_direct(m, r):
    plan = make_plan(m, r)
    rng = np.random.default_rng(7)
    g = rng.uniform(-1, 1, size=(r, r))
    d = rng.uniform(-1, 1, size=(plan.n, plan.n))
    y = inverse_transform(plan, ewmm(transform_filter(plan, g),
                                     transform_input(plan, d)))
    ref = conv2d_direct(d[None], g[None, None]).values[0]
    assert y.shape == (m, m)
    assert np.max(np.abs(y - ref)) < 1e-12


def test_tile_shape_validation():
    plan = make_plan(2, 3)
    with pytest.raises(ValueError, match="filter tile"):
        transform_filter(plan, np.ones((4, 4)))
    with pytest.raises(ValueError, match="input tile"):
        transform_input(plan, np.ones((3, 3)))
    with pytest.raises(ValueError, match="transform-domain tile"):
        inverse_transform(plan, np.ones((3, 3)))
    with pytest.raises(ValueError, match="must match"):
        ewmm(np.ones((4, 4)), np.ones((3, 3)))


def test_complexity_reduction_exact():
    assert complexity_reduction(2, 3) == 2.25
    assert complexity_reduction(4, 3) == 4.0
    assert complexity_reduction(1, 1) == 1.0
    with pytest.raises(ValueError):
        complexity_reduction(0, 3)


def test_plan_matrix_shape_validation():
    ok = make_plan(4, 3)
    # a 5-row Bt (one missing polynomial point) must not construct
    with pytest.raises(ValueError):
        WinogradPlan(4, 3, ok.At, ok.Bt[:5], ok.G)
    with pytest.raises(ValueError):
        WinogradPlan(4, 3, ok.At[:, :5], ok.Bt, ok.G)


def test_corrupt_plan_is_caught_by_oracle():
    # zero out the trailing 1 in At's last row: a transcription error that
    # still has legal shapes but breaks the algebra
    ok = make_plan(4, 3)
    at = ok.At.copy()
    at[3, 5] = 0.0
    bad = WinogradPlan(4, 3, at, ok.Bt, ok.G)
    assert plan_identity_error(bad) > 1e-3
    res = oracle_check(bad, trials=20, seed=0)
    assert not res.passed
    assert res.worst_case is not None
    assert {"trial", "shape_x", "shape_f", "x", "f", "err"} <= set(res.worst_case)
    assert "FAIL" in res.describe()


# ---------------------------------------------------------------------------
# tensor wrappers


def test_feature_map_validation():
    fm = FeatureMap(np.zeros((2, 5, 6)))
    assert (fm.c, fm.h, fm.w) == (2, 5, 6)
    with pytest.raises(ValueError, match=r"\(c, H, W\)"):
        FeatureMap(np.zeros((5, 6)))
    with pytest.raises(ValueError, match="non-finite"):
        FeatureMap(np.full((1, 3, 3), np.nan))


def test_filter_bank_validation():
    fb = FilterBank(np.zeros((4, 2, 3, 3)))
    assert (fb.n_filters, fb.c, fb.r) == (4, 2, 3)
    with pytest.raises(ValueError, match="square"):
        FilterBank(np.zeros((4, 2, 3, 5)))
    with pytest.raises(ValueError, match=r"\(N, c, r, r\)"):
        FilterBank(np.zeros((2, 3, 3)))


# ---------------------------------------------------------------------------
# full convolutions


def test_direct_conv_hand_example():
    x = np.arange(9, dtype=float).reshape(1, 3, 3)
    f = np.ones((1, 1, 3, 3))
    out = conv2d_direct(x, f)
    assert out.values.shape == (1, 1, 1)
    assert out.values[0, 0, 0] == pytest.approx(36.0, abs=0.0)


def test_all_ones_conv_sums_the_window():
    x = np.ones((1, 4, 4))
    f = np.ones((1, 1, 3, 3))
    assert np.array_equal(conv2d_direct(x, f).values, np.full((1, 2, 2), 9.0))
    for plan in (make_plan(2, 3), make_plan(4, 3)):
        got = winograd_conv2d(x, f, plan).values
        assert np.allclose(got, 9.0, atol=1e-12)


def test_direct_conv_channel_accumulation():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, size=(3, 6, 7))
    f = rng.uniform(-1, 1, size=(2, 3, 3, 3))
    out = conv2d_direct(x, f).values
    # summing single-channel results must reproduce the multi-channel output
    parts = sum(conv2d_direct(x[c:c + 1], f[:, c:c + 1]).values for c in range(3))
    assert np.allclose(out, parts, atol=1e-12)


def test_direct_conv_errors():
    with pytest.raises(ValueError, match="channel mismatch"):
        conv2d_direct(np.zeros((2, 5, 5)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ValueError, match="smaller than filter"):
        conv2d_direct(np.zeros((1, 2, 5)), np.zeros((1, 1, 3, 3)))


@pytest.mark.parametrize("m,r", PLANS)
def test_winograd_matches_direct_randomized(m, r):
    plan = make_plan(m, r)
    rng = np.random.default_rng(42)
    for _ in range(60):
        c = int(rng.integers(1, 5))
        h = int(rng.integers(r, 21))
        w = int(rng.integers(r, 21))
        nf = int(rng.integers(1, 7))
        x = rng.uniform(-1, 1, size=(c, h, w))
        f = rng.uniform(-1, 1, size=(nf, c, r, r))
        got = winograd_conv2d(x, f, plan).values
        ref = conv2d_direct(x, f).values
        assert got.shape == ref.shape == (nf, h - r + 1, w - r + 1)
        assert np.max(np.abs(got - ref)) < 1e-10, (c, h, w, nf)


def test_winograd_edge_geometries():
    # exact tile multiples, single-output rows, and ragged crops
    plan = make_plan(4, 3)
    rng = np.random.default_rng(5)
    for h, w in [(6, 6), (3, 3), (3, 17), (10, 10), (11, 13)]:
        x = rng.uniform(-1, 1, size=(2, h, w))
        f = rng.uniform(-1, 1, size=(3, 2, 3, 3))
        got = winograd_conv2d(x, f, plan).values
        ref = conv2d_direct(x, f).values
        assert np.max(np.abs(got - ref)) < 1e-10, (h, w)


def test_winograd_float32_pipeline():
    plan = make_plan(4, 3)
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(3, 12, 12)).astype(np.float32)
    f = rng.uniform(-1, 1, size=(4, 3, 3, 3)).astype(np.float32)
    got = winograd_conv2d(x, f, plan, dtype=np.float32).values
    ref = conv2d_direct(x.astype(np.float64), f.astype(np.float64)).values
    assert np.max(np.abs(got - ref)) < 1e-3  # single-precision rounding only


def test_winograd_plan_filter_mismatch():
    plan = make_plan(4, 3)
    with pytest.raises(ValueError, match="plan r"):
        winograd_conv2d(np.zeros((1, 8, 8)), np.zeros((1, 1, 5, 5)), plan)


# ---------------------------------------------------------------------------
# tile streaming


def test_tile_stream_counts_and_coverage():
    plan = make_plan(4, 3)
    x = np.random.default_rng(0).uniform(size=(2, 8, 8))
    ts = tile_stream(x, plan)
    # valid output is 6x6 -> 2x2 tiles of stride 4
    assert ts.n_tiles == 4
    assert ts.tile_edge == plan.n and ts.stride == plan.m
    assert ts.origins == [(0, 0), (0, 4), (4, 0), (4, 4)]
    total = ts.n_tiles * plan.n ** 2 * 2
    assert ts.fetched + ts.reused == total
    # one horizontal neighbour per row reuses (r-1)*n columns per channel
    assert ts.reused == 2 * (plan.r - 1) * plan.n * 2


def test_tile_stream_tiles_reproduce_convolution():
    plan = make_plan(4, 3)
    rng = np.random.default_rng(9)
    x = rng.uniform(-1, 1, size=(3, 11, 9))
    f = rng.uniform(-1, 1, size=(2, 3, 3, 3))
    ref = conv2d_direct(x, f).values
    out = np.zeros((2, ref.shape[1] + (-ref.shape[1] % plan.m),
                    ref.shape[2] + (-ref.shape[2] % plan.m)))
    u = np.stack([[transform_filter(plan, f[k, c]) for c in range(3)]
                  for k in range(2)])
    for i, j, tile in tile_stream(x, plan):
        for k in range(2):
            acc = np.zeros((plan.m, plan.m))
            for c in range(3):
                v = transform_input(plan, tile[c])
                acc += inverse_transform(plan, ewmm(u[k, c], v))
            out[k, i:i + plan.m, j:j + plan.m] = acc
    assert np.max(np.abs(out[:, :ref.shape[1], :ref.shape[2]] - ref)) < 1e-10


# ---------------------------------------------------------------------------
# randomized checking harness


def test_oracle_check_passes_and_is_deterministic():
    plan = make_plan(2, 3)
    a = oracle_check(plan, trials=40, seed=123)
    b = oracle_check(plan, trials=40, seed=123)
    assert a.passed and b.passed
    assert a.max_err == b.max_err
    assert "ok" in a.describe()
    # the light worst-case summary never keeps the arrays on success
    assert "x" not in (a.worst_case or {})


def test_oracle_check_rejects_bad_trials():
    with pytest.raises(ValueError):
        oracle_check(make_plan(2, 3), trials=0)


def test_check_result_describe_format():
    r = CheckResult(2, 3, 10, 1e-10, 5e-12)
    assert r.describe() == "plan(2,3): max_err=5.000e-12 over 10 trials (tol 1e-10) [ok]"
