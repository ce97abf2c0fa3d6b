import numpy as np
import pytest

from equicine.autodiff import Tensor
from equicine.metrics import hfen, psnr, ssim
from equicine.mri import generate_test_mask_2d, rotate_kspace
from equicine.phantom import Sample, make_sample
from equicine.train import (AdamState, MetricsReport, TrainConfig, TrainingDivergedError, adam_step, evaluate,
                            l1_loss, lr_at, reconstruct, score_pair, train)
from equicine.unroll import build_model, variant_config

TINY = dict(K=1, channels=1)


@pytest.fixture(scope="module")
def small_set():
    return [make_sample(s, T=3, H=16, W=16, n_coils=2, R=2.0) for s in range(3)]


def test_l1_loss_examples():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 3, 4, 4))
    assert l1_loss(Tensor(a), a).data == 0.0
    assert l1_loss(Tensor(a + 0.5), a).data == pytest.approx(0.5, abs=1e-15)
    b = rng.normal(size=a.shape)
    total = 0.0
    for v, w in zip(a.ravel(), b.ravel()):
        total += abs(v - w)
    assert l1_loss(Tensor(a), b).data == pytest.approx(total / a.size, rel=1e-13)
    assert l1_loss(Tensor(2.5 * a), 2.5 * b).data == pytest.approx(2.5 * l1_loss(Tensor(a), b).data, rel=1e-13)
    with pytest.raises(ValueError, match="shape"):
        l1_loss(Tensor(a), a[:, :2])


def test_adam_first_step():
    p = [Tensor(np.zeros(3), requires_grad=True)]
    state = adam_step(p, [np.ones(3)], AdamState.zeros_like(p), lr=1e-3)
    # bias-corrected m/sqrt(v) is exactly 1, so the step is lr / (1 + eps)
    assert np.allclose(p[0].data, -1e-3 / (1 + 1e-8), rtol=0, atol=1e-18)
    assert abs(p[0].data[0] - -0.000999999995) < 1e-11
    assert state.t == 1


def test_adam_zero_grad_and_symmetry():
    p = [Tensor(np.array([1.0, -2.0]), requires_grad=True), Tensor(np.array([3.0]), requires_grad=True)]
    before = [q.data.copy() for q in p]
    adam_step(p, [np.zeros(2), np.zeros(1)], AdamState.zeros_like(p), lr=1e-3)
    assert all(np.array_equal(a, q.data) for a, q in zip(before, p))
    q = [Tensor(np.array([0.3, 0.3]), requires_grad=True)]
    st = AdamState.zeros_like(q)
    for g in ([0.7, 0.7], [-0.2, -0.2], [1.5, 1.5]):
        adam_step(q, [np.array(g)], st, lr=1e-2)
    assert q[0].data[0] == q[0].data[1]
    with pytest.raises(ValueError):
        adam_step(q, [np.zeros(2), np.zeros(2)], st, lr=1e-3)


def test_lr_schedule_and_config_validation():
    cfg = TrainConfig()
    assert [lr_at(cfg, e) for e in range(3)] == [0.001, 0.001 * 0.95, 0.001 * 0.95 ** 2]
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainConfig(train_R=())


def test_zero_epochs_leaves_model_unchanged(small_set):
    model = build_model(variant_config("dun-sre", **TINY), seed=0)
    before = [p.data.copy() for p in model.params]
    _, curve = train(model, small_set, TrainConfig(epochs=0, train_R=(2.0,)))
    assert curve == []
    assert all(np.array_equal(a, p.data) for a, p in zip(before, model.params))
    with pytest.raises(ValueError, match="empty"):
        train(model, [], TrainConfig(epochs=1))


def test_overfit_single_sample():
    sample = make_sample(3, T=3, H=8, W=8, n_coils=2, R=4.0)
    model = build_model(variant_config("dun-sre", K=2, channels=4), seed=0)
    _, curve = train(model, [sample], TrainConfig(epochs=200, lr=1e-2, gamma=0.99, train_R=(4.0,)))
    assert curve[-1]["loss"] * 10 <= curve[0]["loss"]


def test_training_is_deterministic(small_set):
    curves = []
    for _ in range(2):
        model = build_model(variant_config("dun-sre", **TINY), seed=1)
        curves.append([r["loss"] for r in train(model, small_set, TrainConfig(epochs=2, train_R=(2.0,), seed=5))[1]])
    assert curves[0] == curves[1]


def test_divergence_aborts_with_diagnostic(small_set):
    model = build_model(variant_config("dun-sre", **TINY), seed=0)
    model.log_eta[0].data[...] = 800.0
    with pytest.raises(TrainingDivergedError, match="epoch 0"):
        train(model, small_set, TrainConfig(epochs=1, train_R=(2.0,)))


def test_rotated_dataset_gives_identical_loss_curve():
    samples = []
    for s in range(2):
        base = make_sample(s, T=3, H=8, W=8, n_coils=2, R=2.0)
        samples.append(Sample(base.image, base.sens, generate_test_mask_2d(8, 8, 3, 2.5, seed=s), s))
    curves = []
    for k in range(4):
        rotated = [Sample(np.rot90(s.image, k, axes=(1, 2)), np.rot90(s.sens, k, axes=(1, 2)),
                          rotate_kspace(s.mask, k), s.seed) for s in samples]
        model = build_model(variant_config("dun-sre", K=2, channels=1), seed=2)
        curves.append(np.array([c["loss"] for c in train(model, rotated, TrainConfig(epochs=2, train_R=(None,)))[1]]))
    for c in curves[1:]:
        assert np.max(np.abs(c - curves[0])) <= 1e-6


def test_evaluate_contract(small_set):
    model = build_model(variant_config("dun-sre", **TINY), seed=0)
    report = evaluate(model, small_set, [2.0, 4.0], variant="dun")
    assert len(report.rows) == 2 * 2 * len(small_set)
    for R in (2.0, 4.0):
        assert len(report.values("zero-filled", R, "psnr_db")) == len(small_set)
    for row in report.rows:
        rec, zf = reconstruct(model if row["variant"] == "dun" else None, small_set[row["sample_id"]], row["R"])
        single = score_pair(rec, small_set[row["sample_id"]].image)
        assert single == {k: row[k] for k in ("psnr_db", "ssim", "hfen")}
    untrained = evaluate(None, small_set, [2.0])
    assert {r["variant"] for r in untrained.rows} == {"zero-filled"}
    with pytest.raises(ValueError, match="empty"):
        evaluate(model, [], [2.0])


def test_parallel_evaluation_matches_serial(small_set):
    model = build_model(variant_config("dun-sre", **TINY), seed=0)
    assert evaluate(model, small_set, [2.0], jobs=2).rows == evaluate(model, small_set, [2.0]).rows


def test_perfect_reconstruction_report(small_set):
    ref = small_set[0].image
    scores = score_pair(ref, ref)
    assert scores["psnr_db"] == float("inf") and scores["ssim"] == pytest.approx(1.0, abs=1e-12)
    assert scores["hfen"] == 0.0
    report = MetricsReport([{"sample_id": 0, "R": 8.0, "variant": "oracle", **scores}])
    assert report.csv_lines() == ["sample_id,R,variant,psnr_db,ssim,hfen", "0,8,oracle,300.000000,1.00000000,0.00000000"]
    summary = report.summary()[0]
    assert summary["n"] == 1 and summary["ssim_std"] == 0.0
    assert summary["psnr_db_mean"] == 300.0 and summary["psnr_db_std"] == 0.0


def test_summary_statistics():
    rows = [{"sample_id": i, "R": 4.0, "variant": "v", "psnr_db": p, "ssim": 0.5, "hfen": 0.1}
            for i, p in enumerate([20.0, 22.0, 30.0])]
    s = MetricsReport(rows).summary()[0]
    assert s["psnr_db_mean"] == pytest.approx(24.0)
    assert s["psnr_db_median"] == 22.0
    assert s["psnr_db_std"] == pytest.approx(np.std([20.0, 22.0, 30.0]))
    assert s["psnr_db_std"] >= 0


def test_metric_helpers_agree_with_score_pair(small_set):
    s = small_set[1]
    rec, zf = reconstruct(None, s, 2.0)
    assert np.array_equal(rec, zf)
    assert score_pair(zf, s.image) == {"psnr_db": psnr(zf, s.image), "ssim": ssim(np.abs(zf), np.abs(s.image)),
                                       "hfen": hfen(np.abs(zf), np.abs(s.image))}
