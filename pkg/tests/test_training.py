import numpy as np
import pytest

from recfm import autodiff as ad
from recfm.model import MLPVelocityModel, ModelConfig, init_params
from recfm.training import (
    AdamW,
    TrainConfig,
    TrainData,
    recfm_loss,
    shortcut_loss,
    train,
    vanilla_fm_loss,
)


class OracleModel:
    """Returns exactly the scaled target velocity for a fixed batch."""

    def __init__(self, vstar):
        self.vstar = np.asarray(vstar, dtype=np.float64)

    def predict(self, x, cond, t, alpha):
        alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (self.vstar.shape[0],))
        return ad.constant(alpha[:, None] * self.vstar)


class PrimaryOnlyModel:
    """Predicts the raw target on the primary pass, zero on secondary passes."""

    def __init__(self, vstar):
        self.vstar = np.asarray(vstar, dtype=np.float64)

    def predict(self, x, cond, t, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        if np.all(alpha == 1.0):
            return ad.constant(self.vstar)
        return ad.constant(np.zeros_like(self.vstar))


def make_batch(b=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(b, d))
    x1 = rng.normal(size=(b, d))
    return x0, x1, None


def test_oracle_model_gives_zero_loss():
    x0, x1, _ = make_batch()
    cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=1.0)
    breakdown = recfm_loss(OracleModel(x1 - x0), (x0, x1, None),
                           np.random.default_rng(0), cfg)
    assert breakdown.total == 0.0
    assert all(v == 0.0 for v in breakdown.traj + breakdown.cons)


def test_depth_one_reduces_to_vanilla():
    x0, x1, _ = make_batch(seed=1)
    model = MLPVelocityModel(ModelConfig(state_dim=3, hidden_widths=(8,), embed_dim=4))
    cfg = TrainConfig(mode="recfm", depth=1, consistency_weight=0.0)
    a = recfm_loss(model, (x0, x1, None), np.random.default_rng(7), cfg)
    b = vanilla_fm_loss(model, (x0, x1, None), np.random.default_rng(7), cfg)
    assert a.total == b.total
    assert a.cons == [] and b.cons == []


def test_fm_mode_forces_depth_and_weight():
    cfg = TrainConfig(mode="fm", depth=5, consistency_weight=3.0)
    assert cfg.depth == 1 and cfg.consistency_weight == 0.0


def test_hand_computed_two_scale_loss():
    x0, x1, _ = make_batch(b=5, d=2, seed=2)
    vstar = x1 - x0
    alpha = np.full(5, 0.6)
    cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=1.0)
    breakdown = recfm_loss(PrimaryOnlyModel(vstar), (x0, x1, None),
                           np.random.default_rng(0), cfg,
                           t_override=np.full(5, 0.3), alpha_override=alpha)
    expected = 2.0 * np.mean(np.sum((alpha[:, None] * vstar) ** 2, axis=1))
    assert breakdown.total == pytest.approx(expected, rel=1e-12)
    assert breakdown.traj[0] == 0.0


def test_consistency_vanishes_at_alpha_one():
    x0, x1, _ = make_batch(seed=3)
    model = MLPVelocityModel(ModelConfig(state_dim=3, hidden_widths=(8,), embed_dim=4))
    cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=1.0)
    breakdown = recfm_loss(model, (x0, x1, None), np.random.default_rng(0), cfg,
                           t_override=np.full(4, 0.4), alpha_override=np.ones(4))
    assert breakdown.cons[0] == 0.0


def test_breakdown_additivity():
    x0, x1, _ = make_batch(seed=4)
    model = MLPVelocityModel(ModelConfig(state_dim=3, hidden_widths=(8,), embed_dim=4))
    cfg = TrainConfig(mode="recfm", depth=3, consistency_weight=2.5)
    br = recfm_loss(model, (x0, x1, None), np.random.default_rng(1), cfg)
    assert br.total == pytest.approx(sum(br.traj) + 2.5 * sum(br.cons), abs=1e-12)


def test_loss_gradient_matches_finite_differences():
    cfg_model = ModelConfig(state_dim=2, cond_dim=0, hidden_widths=(6,), embed_dim=4, seed=5)
    init = init_params(cfg_model)
    x0, x1, _ = make_batch(b=4, d=2, seed=5)
    t_fix = np.array([0.2, 0.4, 0.6, 0.8])
    a_fix = np.array([0.5, 0.6, 0.9, 1.0])
    cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=1.0)

    def loss(tensors):
        params = init_params(cfg_model)
        params.tensors = tensors
        model = MLPVelocityModel(cfg_model, params)
        return recfm_loss(model, (x0, x1, None), np.random.default_rng(0), cfg,
                          t_override=t_fix, alpha_override=a_fix).node

    report = ad.grad_check(loss, {k: t.data for k, t in init.tensors.items()})
    assert max(report.values()) <= 1e-5


def test_stop_gradient_flag_changes_gradients():
    cfg_model = ModelConfig(state_dim=2, hidden_widths=(6,), embed_dim=4, seed=6)
    x0, x1, _ = make_batch(b=4, d=2, seed=6)
    t_fix = np.full(4, 0.3)
    a_fix = np.full(4, 0.5)

    def grad_norm(stop):
        model = MLPVelocityModel(cfg_model)
        cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=5.0,
                          stop_gradient=stop)
        br = recfm_loss(model, (x0, x1, None), np.random.default_rng(0), cfg,
                        t_override=t_fix, alpha_override=a_fix)
        br.node.backward()
        return np.concatenate([ad.grad_or_zero(t).ravel()
                               for t in model.params.tensors.values()])

    assert not np.array_equal(grad_norm(True), grad_norm(False))


# -- shortcut baseline ---------------------------------------------------------

class ConstantFieldModel:
    def __init__(self, value, dim):
        self.value = value
        self.dim = dim

    def predict(self, x, cond, t, alpha):
        x = np.asarray(x, dtype=np.float64)
        return ad.constant(np.full((x.shape[0], self.dim), self.value))


class CurvedFieldModel:
    """Velocity sin(x), independent of the step-size condition."""

    def predict(self, x, cond, t, alpha):
        return ad.constant(np.sin(np.asarray(x, dtype=np.float64)))


def test_shortcut_constant_field_composes_exactly():
    x0, x1, _ = make_batch(b=8, d=3, seed=7)
    cfg = TrainConfig(mode="shortcut")
    br = shortcut_loss(ConstantFieldModel(0.7, 3), (x0, x1, None), 0.25,
                       np.random.default_rng(0), cfg)
    assert br.cons[0] == pytest.approx(0.0, abs=1e-28)


def test_shortcut_residual_second_order_in_d():
    x0, x1, _ = make_batch(b=64, d=3, seed=8)
    cfg = TrainConfig(mode="shortcut", shortcut_fraction=1.0)
    rng_master = np.random.default_rng(3)
    t_shared = rng_master.uniform(0, 0.4, size=64)

    residuals = []
    ds = [0.02, 0.04, 0.08, 0.16]
    for d in ds:
        # same rng per d so the sampled times match
        br = shortcut_loss(CurvedFieldModel(), (x0, x1, None), d,
                           np.random.default_rng(11), cfg)
        residuals.append(np.sqrt(br.cons[0]))
    slope = np.polyfit(np.log(ds), np.log(residuals), 1)[0]
    assert 1.6 <= slope <= 2.4


def test_shortcut_curved_field_has_positive_residual():
    x0, x1, _ = make_batch(b=16, d=3, seed=9)
    cfg = TrainConfig(mode="shortcut")
    br = shortcut_loss(CurvedFieldModel(), (x0, x1, None), 0.2,
                       np.random.default_rng(0), cfg)
    assert br.cons[0] > 0.0


def test_shortcut_rejects_bad_step():
    x0, x1, _ = make_batch()
    cfg = TrainConfig(mode="shortcut")
    for bad in (0.0, 0.6, -0.1):
        with pytest.raises(ValueError):
            shortcut_loss(ConstantFieldModel(0.0, 3), (x0, x1, None), bad,
                          np.random.default_rng(0), cfg)


# -- optimizer / training loop ---------------------------------------------------

def test_adamw_decoupled_decay():
    cfg = ModelConfig(state_dim=2, hidden_widths=(4,), embed_dim=4, seed=0)
    params = init_params(cfg)
    w_before = params.tensors["w0"].data.copy()
    # zero gradients: only the decay term moves the weights
    opt = AdamW(lr=0.1, weight_decay=0.5)
    opt.step(params)
    np.testing.assert_allclose(params.tensors["w0"].data, w_before * (1 - 0.1 * 0.5),
                               rtol=1e-12)


def gaussian_train_data(n=512, seed=0):
    rng = np.random.default_rng(seed)
    return TrainData(rng.standard_normal((n, 1)))


def test_zero_iterations_keeps_init():
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=1))
    before = model.params.copy_arrays()
    cfg = TrainConfig(mode="fm", iterations=0, batch_size=8)
    train(cfg, model, gaussian_train_data())
    for name, arr in before.items():
        np.testing.assert_array_equal(model.params.tensors[name].data, arr)


def test_training_deterministic():
    def run():
        model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=2))
        cfg = TrainConfig(mode="recfm", depth=2, iterations=30, batch_size=16, seed=3)
        return train(cfg, model, gaussian_train_data()).curve

    c1, c2 = run(), run()
    assert c1 == c2


def test_nfe_accounting():
    data = gaussian_train_data()
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=0))
    cfg = TrainConfig(mode="recfm", depth=2, iterations=3, batch_size=8, seed=0)
    assert train(cfg, model, data).nfe == 3 * 8 * 2

    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=0))
    cfg = TrainConfig(mode="fm", iterations=3, batch_size=8, seed=0)
    assert train(cfg, model, data).nfe == 3 * 8


def test_lambda_zero_depth_two_improves_over_init():
    data = gaussian_train_data(seed=4)
    val = gaussian_train_data(n=128, seed=5)
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(32, 32), embed_dim=8, seed=6))
    cfg = TrainConfig(mode="recfm", depth=2, consistency_weight=0.0, iterations=400,
                      batch_size=32, seed=7, eval_every=400)
    from recfm.training import _one_step_val_mse

    noise = np.random.default_rng(0).standard_normal((64, 4, 1))
    before = _one_step_val_mse(model, val, noise)
    result = train(cfg, model, data, val)
    after = _one_step_val_mse(model, val, noise)
    assert not result.aborted
    assert after < before


def test_validation_loss_trend():
    data = gaussian_train_data(seed=8)
    val = gaussian_train_data(n=128, seed=9)
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(32, 32), embed_dim=8, seed=10))
    cfg = TrainConfig(mode="recfm", depth=2, iterations=400, batch_size=32, seed=11,
                      eval_every=10)
    result = train(cfg, model, data, val)
    vals = [row[-1] for row in result.curve if row[-1] is not None]
    tenth = max(1, len(vals) // 10)
    assert np.median(vals[-tenth:]) < np.median(vals[:tenth])


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_divergence_aborts_with_last_good_params():
    data = gaussian_train_data(seed=12)
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=13))
    cfg = TrainConfig(mode="fm", iterations=200, batch_size=8, learning_rate=1e150, seed=14)
    result = train(cfg, model, data)
    assert result.aborted
    for tensor in model.params.tensors.values():
        assert np.all(np.isfinite(tensor.data))


def test_curve_csv_written(tmp_path):
    data = gaussian_train_data(seed=15)
    model = MLPVelocityModel(ModelConfig(state_dim=1, hidden_widths=(8,), embed_dim=4, seed=16))
    cfg = TrainConfig(mode="recfm", depth=2, iterations=5, batch_size=8, seed=17)
    train(cfg, model, data, out_dir=tmp_path / "run")
    curve = (tmp_path / "run" / "train_curve.csv").read_text().splitlines()
    assert curve[0] == "iteration,nfe,loss_total,loss_traj_1,loss_traj_2,loss_cons_2,val_mse"
    assert len(curve) == 6
    assert (tmp_path / "run" / "checkpoint.json").exists()
