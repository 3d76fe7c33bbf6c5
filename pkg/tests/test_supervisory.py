import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guided_rpl.data_io import SyntheticSpec, generate_synthetic
from guided_rpl.incremental import one_hot
from guided_rpl.numerics import ridge_solve
from guided_rpl.rpl import BasisBlock, XiSchedule, activate, make_rng, sample_block
from guided_rpl.supervisory import (
    ConstructionConfig,
    GramState,
    apply_block,
    construct,
    evaluate_mgsm,
    evaluate_scsm,
    schur_complement,
)


def _grown_state(rng, N=20, C=2, n_prev=5, lam=0.01):
    Z = rng.normal(size=(N, 3))
    Y = rng.normal(size=(N, C))
    state = GramState.empty(Y, lam)
    if n_prev:
        blk = sample_block(rng, 3, n_prev, 1.0)
        state = apply_block(state, blk, activate(Z, blk))
    return Z, Y, state


def _dummy_block(s):
    return BasisBlock(np.zeros((1, s)), np.zeros(s), 1.0)


def test_schur_empty_state():
    state = GramState.empty(np.zeros((2, 1)), 0.5)
    np.testing.assert_allclose(schur_complement(state, np.array([[1.0], [0.0]])), [[1.5]], atol=1e-15)


def test_schur_perfect_redundancy():
    rng = np.random.default_rng(0)
    h = rng.random((10, 1))
    lam = 0.01
    state = apply_block(GramState.empty(np.zeros((10, 1)), lam), _dummy_block(1), h)
    g = float(h[:, 0] @ h[:, 0])
    S = schur_complement(state, h)[0, 0]
    assert S == pytest.approx((g + lam) - g**2 / (g + lam), rel=1e-8)
    assert S >= lam


def test_schur_matches_dense_inverse():
    rng = np.random.default_rng(5)
    _, _, state = _grown_state(rng, N=20, n_prev=5)
    H_s = rng.random((20, 3))
    lam = state.lam
    H = np.hstack([state.features, H_s])
    G_inv = np.linalg.inv(H.T @ H + lam * np.eye(8))
    S_oracle = np.linalg.inv(G_inv[5:, 5:])
    np.testing.assert_allclose(schur_complement(state, H_s), S_oracle, rtol=1e-9, atol=1e-12)


def test_mgsm_orthogonal_residual_rejected():
    E = np.array([[1.0], [0.0]])
    state = GramState.empty(E, 0.01)
    rep = evaluate_mgsm(state, np.array([[0.0], [1.0]]), 0.99)
    assert rep.lhs_aggregate == pytest.approx(0.0, abs=1e-15)
    assert not rep.accepted


def test_mgsm_scalar_case():
    e = np.array([[1.0], [0.0]])
    rep = evaluate_mgsm(GramState.empty(e, 0.01), e.copy(), 0.99)
    assert rep.lhs_aggregate == pytest.approx(2 / 1.01 - 1 / 1.01**2, rel=1e-12)
    assert rep.lhs_aggregate == pytest.approx(0.999902, abs=1e-6)
    assert rep.threshold == pytest.approx(0.01)
    assert rep.coupling_aggregate == pytest.approx(0.0, abs=1e-15)
    assert rep.accepted


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 8), st.integers(1, 4), st.integers(1, 3))
def test_mgsm_improvement_and_decomposition(seed, n_prev, s, C):
    rng = np.random.default_rng(seed)
    Z, Y, state = _grown_state(rng, N=25, C=C, n_prev=n_prev)
    blk = sample_block(make_rng(seed), 3, s, 1.5)
    H_s = activate(Z, blk)
    rep = evaluate_mgsm(state, H_s, 0.99)
    new = apply_block(state, blk, H_s)
    exact = state.residual_norm**2 - new.residual_norm**2
    assert rep.improvement == pytest.approx(exact, abs=1e-9 * (1 + state.residual_norm**2))
    # residual decomposition: criterion value plus coupling term is the exact gain
    assert rep.lhs_aggregate + rep.coupling_aggregate == pytest.approx(exact, abs=1e-8 * (1 + state.residual_norm**2))
    assert rep.schur_min_eig >= state.lam - 1e-9


def test_mgsm_per_column_is_stricter():
    rng = np.random.default_rng(11)
    Z, Y, state = _grown_state(rng, N=30, C=3, n_prev=0)
    for _ in range(20):
        H_s = activate(Z, sample_block(make_rng(int(rng.integers(1000))), 3, 2, 1.0))
        if evaluate_mgsm(state, H_s, 0.99, per_column=True).accepted:
            assert evaluate_mgsm(state, H_s, 0.99).accepted


def test_scsm_examples():
    E = np.array([[1.0], [0.0]])
    state = GramState.empty(E, 0.01)
    assert evaluate_scsm(state, np.array([0.3, 1.0]), 0.005, 0.99)
    assert evaluate_scsm(state, np.array([2.0, 0.0]), 0.005, 0.99)
    assert not evaluate_scsm(state, np.array([0.0, 1.0]), 0.005, 0.99)
    with pytest.raises(ValueError):
        evaluate_scsm(state, np.array([1.0, 0.0]), 0.5, 0.99)


def test_apply_first_block_is_ridge():
    rng = np.random.default_rng(2)
    H, Y = rng.random((12, 4)), rng.normal(size=(12, 2))
    state = apply_block(GramState.empty(Y, 0.1), _dummy_block(4), H)
    np.testing.assert_allclose(state.weights, ridge_solve(H, Y, 0.1), rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, 2, 3]))
def test_apply_block_matches_resolve(seed, refactor_every):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(30, 2))
    state = GramState.empty(Y, 0.05, refactor_every)
    for _ in range(6):
        H_s = rng.random((30, int(rng.integers(1, 5))))
        state = apply_block(state, _dummy_block(H_s.shape[1]), H_s)
        oracle = np.linalg.solve(state.features.T @ state.features + 0.05 * np.eye(state.n_units),
                                 state.features.T @ Y)
        assert np.linalg.norm(state.weights - oracle) <= 1e-8 * np.linalg.norm(oracle)
        np.testing.assert_allclose(state.residual, Y - state.features @ state.weights, atol=1e-10)


def test_apply_zero_targets():
    state = GramState.empty(np.zeros((6, 2)), 0.01)
    state = apply_block(state, _dummy_block(3), np.random.default_rng(0).random((6, 3)))
    assert not state.weights.any()
    assert state.residual_norm == 0.0


def test_construct_zero_targets():
    model, state, diag = construct(np.ones((5, 2)), np.zeros((5, 3)), ConstructionConfig(), make_rng(0))
    assert model.total_units == 0
    assert diag.termination == "ResidualMet"


def _two_blobs(seed=0, N=200, d=8):
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    y = np.repeat([0, 1], N // 2)
    Z = rng.normal(scale=0.5, size=(N, d)) + np.outer(np.where(y == 0, -3.0, 3.0), direction)
    return Z, one_hot(y, (0, 1))


def test_construct_separable_blobs_meets_target():
    Z, Y = _two_blobs()
    cfg = ConstructionConfig(s=10, b_max=5, epsilon=1.0, xi_schedule=XiSchedule(0.5, 0.5, 20.0))
    model, state, diag = construct(Z, Y, cfg, make_rng(0))
    assert diag.termination == "ResidualMet"
    assert state.residual_norm <= 1.0
    for rec in diag.accepted_records():
        assert rec.residual_norm**2 <= 0.99 * rec.residual_before**2 + 1e-9 * (1 + rec.residual_before**2)


def test_construct_exhausts_schedule():
    Z, Y = _two_blobs(1)
    cfg = ConstructionConfig(s=2, b_max=2, epsilon=1e-6, xi_schedule=XiSchedule(1e-6, 1.0, 1e-6))
    model, state, diag = construct(Z, Y, cfg, make_rng(0))
    assert diag.termination == "XiExhausted"
    assert model.total_units == state.n_units
    assert diag.final_hidden_size == model.total_units


def test_construct_unit_cap():
    Z, Y = _two_blobs(2)
    cfg = ConstructionConfig(s=5, epsilon=1e-9, strategy="ri", max_units=12)
    model, state, diag = construct(Z, Y, cfg, make_rng(0))
    assert diag.termination == "MaxUnits"
    assert model.total_units == 10


def test_construct_is_deterministic():
    data = generate_synthetic(SyntheticSpec(classes=4, train_per_class=20, feature_dim=6, seed=3))
    Y = one_hot(data.y_train, range(4))
    cfg = ConstructionConfig(s=4, b_max=3, epsilon=0.5, xi_schedule=XiSchedule(0.1, 0.3, 2.0))
    runs = [construct(data.X_train, Y, cfg, make_rng(9)) for _ in range(2)]
    np.testing.assert_array_equal(runs[0][0].input_weights, runs[1][0].input_weights)
    np.testing.assert_array_equal(runs[0][1].weights, runs[1][1].weights)
    assert runs[0][2].records == runs[1][2].records


@pytest.mark.parametrize("strategy", ["mgsm", "scsm", "ri"])
def test_construct_residual_never_increases(strategy):
    data = generate_synthetic(SyntheticSpec(classes=3, train_per_class=30, feature_dim=5, seed=1))
    Y = one_hot(data.y_train, range(3))
    cfg = ConstructionConfig(s=3, b_max=4, epsilon=0.5, xi_schedule=XiSchedule(0.2, 0.4, 3.0),
                             strategy=strategy, max_units=60)
    _, state, diag = construct(data.X_train, Y, cfg, make_rng(4))
    norms = [diag.initial_residual_norm] + [r.residual_norm for r in diag.records]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    for rec in diag.records:
        if rec.schur_min_eig is not None:
            assert rec.schur_min_eig >= cfg.lam - 1e-9
