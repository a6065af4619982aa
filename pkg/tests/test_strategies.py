from __future__ import annotations

import json
import math
import random

import mpmath
import pytest
import torch

from hostility.data import FINE_DIMENSIONS, LabelSet, SplitBundle
from hostility.encoder import ClassifierHead, EncoderSpec, build_encoder
from hostility.strategies import (
    COARSE_ROLE,
    JOINT_ROLE,
    MLC_LABEL_ORDER,
    MTL_FINE_ORDER,
    StrategyConfig,
    StrategyError,
    TrainedBundle,
    TrainedUnit,
    TrainingError,
    aux_fuse,
    bce,
    mlc_loss,
    mtl_loss,
    mtl_loss_batch,
    predict,
    train,
)

from conftest import make_post

LN2 = math.log(2.0)

mpmath.mp.dps = 50


def bce_oracle(logit: float, target: float) -> mpmath.mpf:
    """Naive high-precision BCE straight from the definition."""
    sigma = 1 / (1 + mpmath.e ** (-mpmath.mpf(logit)))
    y = mpmath.mpf(target)
    return -(y * mpmath.log(sigma) + (1 - y) * mpmath.log(1 - sigma))


def rel_err(ours: float, truth: mpmath.mpf) -> float:
    denom = max(abs(float(truth)), 1e-300)
    return abs(ours - float(truth)) / denom


def tiny_config(strategy: str, **overrides) -> StrategyConfig:
    defaults = dict(
        strategy=strategy,
        learning_rate=5e-3,
        batch_size=16,
        epochs=2,
        seed=3,
        encoder=EncoderSpec(),
    )
    defaults.update(overrides)
    return StrategyConfig(**defaults)


class TestBce:
    def test_zero_logit(self):
        assert float(bce(0.0, 1.0)) == pytest.approx(LN2, rel=1e-12)
        assert float(bce(0.0, 0.0)) == pytest.approx(LN2, rel=1e-12)

    def test_saturated_correct(self):
        assert float(bce(100.0, 1.0)) < 1e-40
        assert float(bce(-100.0, 0.0)) < 1e-40

    def test_no_overflow_at_extremes(self):
        for logit in (-100.0, -50.0, 50.0, 100.0):
            for target in (0.0, 1.0):
                assert math.isfinite(float(bce(logit, target)))

    def test_matches_oracle_on_random_logits(self):
        rng = random.Random(0)
        for _ in range(300):
            logit = rng.uniform(-30, 30)
            target = rng.choice((0.0, 1.0))
            assert rel_err(float(bce(logit, target)), bce_oracle(logit, target)) < 1e-9


class TestMlcLoss:
    def test_all_zero_logits(self):
        value = float(mlc_loss([0.0] * 5, [1.0, 0.0, 1.0, 0.0, 1.0]))
        assert value == pytest.approx(5 * LN2, rel=1e-12)

    def test_saturated_perfect(self):
        labels = [1.0, 0.0, 0.0, 1.0, 0.0]
        logits = [100.0 if y else -100.0 for y in labels]
        assert float(mlc_loss(logits, labels)) < 1e-38

    def test_batch_mean(self):
        single_a = float(mlc_loss([0.3, -1.0, 2.0, 0.0, 1.0], [1, 0, 1, 0, 1]))
        single_b = float(mlc_loss([-0.5, 0.7, 0.1, -2.0, 3.0], [0, 1, 0, 0, 1]))
        batch = float(
            mlc_loss(
                [[0.3, -1.0, 2.0, 0.0, 1.0], [-0.5, 0.7, 0.1, -2.0, 3.0]],
                [[1, 0, 1, 0, 1], [0, 1, 0, 0, 1]],
            )
        )
        assert batch == pytest.approx((single_a + single_b) / 2, rel=1e-12)

    def test_wrong_length_rejected(self):
        with pytest.raises(StrategyError):
            mlc_loss([0.0] * 4, [0.0] * 4)

    def test_label_order_documented(self):
        assert MLC_LABEL_ORDER == ("hostile", "fake", "hate", "defamation", "offensive")

    def test_matches_oracle(self):
        rng = random.Random(1)
        for _ in range(100):
            m = rng.randint(1, 8)
            logits = [[rng.uniform(-20, 20) for _ in range(5)] for _ in range(m)]
            labels = [[rng.choice((0.0, 1.0)) for _ in range(5)] for _ in range(m)]
            truth = sum(
                sum(bce_oracle(x, y) for x, y in zip(row_x, row_y))
                for row_x, row_y in zip(logits, labels)
            ) / m
            ours = float(mlc_loss(logits, labels)) if m > 1 else float(
                mlc_loss(logits[0], labels[0])
            )
            assert rel_err(ours, truth) < 1e-9


class TestMtlLoss:
    def test_non_hostile_is_exactly_coarse_bce(self):
        labels = LabelSet(hostile=False)
        for coarse in (-3.0, 0.0, 2.5):
            loss = float(mtl_loss(coarse, [5.0, -3.0, 2.0, 1.0], labels, 0.5))
            assert loss == float(bce(coarse, 0.0))

    def test_hostile_all_zero_logits(self):
        labels = LabelSet(hostile=True, hate=True, defamation=True, fake=True, offensive=True)
        loss = float(mtl_loss(0.0, [0.0] * 4, labels, 0.5))
        assert loss == pytest.approx(1.5 * LN2, rel=1e-12)

    def test_lambda_zero_degenerates_to_coarse(self):
        for hostile in (True, False):
            labels = LabelSet(hostile=hostile, fake=hostile)
            loss = float(mtl_loss(0.7, [1.0, 2.0, 3.0, 4.0], labels, 0.0))
            assert loss == pytest.approx(float(bce(0.7, 1.0 if hostile else 0.0)), rel=1e-12)

    def test_fine_order_documented(self):
        assert MTL_FINE_ORDER == ("hate", "defamation", "fake", "offensive")

    def test_fine_gradients_exactly_zero_for_non_hostile(self):
        fine = torch.tensor([0.5, -1.0, 2.0, 0.3], dtype=torch.float64, requires_grad=True)
        coarse = torch.tensor(0.2, dtype=torch.float64, requires_grad=True)
        loss = mtl_loss(coarse, fine, LabelSet(hostile=False), 0.5)
        loss.backward()
        assert torch.equal(fine.grad, torch.zeros_like(fine))
        assert coarse.grad.abs().item() > 0

    def test_fine_gradients_nonzero_for_hostile(self):
        fine = torch.tensor([0.5, -1.0, 2.0, 0.3], dtype=torch.float64, requires_grad=True)
        loss = mtl_loss(
            torch.tensor(0.2), fine, LabelSet(hostile=True, hate=True), 0.5
        )
        loss.backward()
        assert fine.grad.abs().sum().item() > 0

    def test_matches_oracle(self):
        rng = random.Random(2)
        for _ in range(100):
            hostile = rng.random() < 0.5
            flags = {dim: bool(hostile and rng.random() < 0.5) for dim in FINE_DIMENSIONS}
            if hostile and not any(flags.values()):
                flags["fake"] = True
            labels = LabelSet(hostile=hostile, **flags)
            coarse = rng.uniform(-20, 20)
            fine = [rng.uniform(-20, 20) for _ in range(4)]
            lam = rng.choice((0.0, 0.25, 0.5, 1.0))
            truth = bce_oracle(coarse, 1.0 if hostile else 0.0)
            if hostile:
                fine_targets = [float(labels.flag(dim)) for dim in MTL_FINE_ORDER]
                truth += (
                    mpmath.mpf(lam)
                    / 4
                    * sum(bce_oracle(x, y) for x, y in zip(fine, fine_targets))
                )
            ours = float(mtl_loss(coarse, fine, labels, lam))
            assert rel_err(ours, truth) < 1e-9

    def test_batch_form_matches_scalar_form(self):
        rng = random.Random(3)
        posts = []
        for _ in range(6):
            hostile = rng.random() < 0.5
            flags = {dim: bool(hostile and rng.random() < 0.5) for dim in FINE_DIMENSIONS}
            if hostile and not any(flags.values()):
                flags["hate"] = True
            posts.append(LabelSet(hostile=hostile, **flags))
        coarse = torch.tensor([rng.uniform(-5, 5) for _ in posts], dtype=torch.float64)
        fine = torch.tensor(
            [[rng.uniform(-5, 5) for _ in range(4)] for _ in posts], dtype=torch.float64
        )
        hostile_mask = torch.tensor([float(p.hostile) for p in posts], dtype=torch.float64)
        fine_targets = torch.tensor(
            [[float(p.flag(dim)) for dim in MTL_FINE_ORDER] for p in posts],
            dtype=torch.float64,
        )
        batch = float(mtl_loss_batch(coarse, fine, hostile_mask, fine_targets, 0.5))
        scalar_mean = sum(
            float(mtl_loss(coarse[i], fine[i], posts[i], 0.5)) for i in range(len(posts))
        ) / len(posts)
        assert batch == pytest.approx(scalar_mean, rel=1e-12)


class TestAuxFuse:
    def test_concatenation(self):
        fused = aux_fuse(torch.tensor([1.0, 2.0, 3.0, 4.0]), torch.tensor([-0.5]))
        assert fused.tolist() == [1.0, 2.0, 3.0, 4.0, -0.5]

    def test_output_width(self):
        fused = aux_fuse(torch.zeros(2, 32), torch.zeros(2, 1))
        assert fused.shape == (2, 33)

    def test_zero_inputs(self):
        fused = aux_fuse(torch.zeros(7), torch.zeros(1))
        assert torch.equal(fused, torch.zeros(8))

    def test_rank_mismatch(self):
        with pytest.raises(StrategyError):
            aux_fuse(torch.zeros(2, 4), torch.zeros(1))

    def test_batch_mismatch(self):
        with pytest.raises(StrategyError):
            aux_fuse(torch.zeros(2, 4), torch.zeros(3, 1))


class TestStrategyConfig:
    def test_defaults_match_contract(self):
        config = StrategyConfig(strategy="AUX")
        assert config.learning_rate == 1e-5
        assert config.batch_size == 16
        assert config.lambda_fine == 0.5
        assert config.threshold == 0.5
        assert config.encoder.max_length == 200
        assert config.encoder.d == 32

    def test_validation(self):
        with pytest.raises(StrategyError):
            StrategyConfig(strategy="XXX")
        with pytest.raises(StrategyError):
            StrategyConfig(strategy="BC", learning_rate=0.0)
        with pytest.raises(StrategyError):
            StrategyConfig(strategy="BC", threshold=1.0)
        with pytest.raises(StrategyError):
            StrategyConfig(strategy="BC", lambda_fine=-0.1)

    def test_json_roundtrip(self):
        config = tiny_config("MTL", lambda_fine=0.25, threshold=0.4)
        payload = json.loads(json.dumps(config.to_dict()))
        assert StrategyConfig.from_dict(payload) == config

    def test_unknown_field_rejected(self):
        with pytest.raises(StrategyError, match="unknown config field"):
            StrategyConfig.from_dict({"strategy": "BC", "optimizer": "sgd"})


class TestTraining:
    def test_mlc_bundle_shape(self, synth_splits_small):
        bundle = train(tiny_config("MLC"), synth_splits_small)
        assert set(bundle.units) == {JOINT_ROLE}
        assert bundle.units[JOINT_ROLE].k == 5
        assert bundle.units[JOINT_ROLE].head_input_width == 32

    def test_mtl_bundle_shape(self, synth_splits_small):
        bundle = train(tiny_config("MTL"), synth_splits_small)
        assert set(bundle.units) == {COARSE_ROLE, *FINE_DIMENSIONS}
        encoders = {id(unit.encoder) for unit in bundle.units.values()}
        assert len(encoders) == 1
        assert all(unit.k == 1 for unit in bundle.units.values())

    def test_bc_bundle_shape(self, synth_splits_small):
        bundle = train(tiny_config("BC"), synth_splits_small)
        encoders = {id(unit.encoder) for unit in bundle.units.values()}
        assert len(encoders) == 5
        assert all(unit.head_input_width == 32 for unit in bundle.units.values())

    def test_aux_bundle_shape(self, synth_splits_small):
        bundle = train(tiny_config("AUX"), synth_splits_small)
        assert bundle.units[COARSE_ROLE].head_input_width == 32
        for dim in FINE_DIMENSIONS:
            assert bundle.units[dim].head_input_width == 33
        assert bundle.coarse_fingerprint is not None

    def test_bc_without_hostile_posts_fails(self):
        posts = tuple(make_post(i) for i in range(40))
        splits = SplitBundle(train=posts, validation=(), test=(), seed=0, ratios=(1.0, 0.0, 0.0))
        with pytest.raises(TrainingError, match="hostile"):
            train(tiny_config("BC"), splits)

    def test_aux_coarse_parameters_bitwise_frozen(self, synth_splits_small):
        bundle = train(tiny_config("AUX"), synth_splits_small)
        assert bundle.unit_fingerprint(COARSE_ROLE) == bundle.coarse_fingerprint

    def test_fine_stages_see_only_hostile_posts(self, synth_splits_small):
        seen: dict[str, list[bool]] = {}
        def hook(role, posts):
            seen.setdefault(role, []).extend(p.labels.hostile for p in posts)
        train(tiny_config("BC", epochs=1), synth_splits_small, batch_hook=hook)
        for dim in FINE_DIMENSIONS:
            assert seen[dim] and all(seen[dim])
        assert not all(seen[COARSE_ROLE])

    def test_training_is_deterministic(self, synth_splits_small):
        config = tiny_config("AUX", epochs=2)
        a = train(config, synth_splits_small)
        b = train(config, synth_splits_small)
        for role in a.units:
            assert a.unit_fingerprint(role) == b.unit_fingerprint(role)
        assert a.history == b.history

    def test_seed_changes_parameters(self, synth_splits_small):
        a = train(tiny_config("MLC", epochs=1, seed=1), synth_splits_small)
        b = train(tiny_config("MLC", epochs=1, seed=2), synth_splits_small)
        assert a.unit_fingerprint(JOINT_ROLE) != b.unit_fingerprint(JOINT_ROLE)

    def test_history_rows_have_contract_fields(self, synth_splits_small):
        bundle = train(tiny_config("MLC", epochs=2), synth_splits_small)
        train_rows = [r for r in bundle.history if r["split"] == "train"]
        val_rows = [r for r in bundle.history if r["split"] == "validation"]
        assert train_rows and val_rows
        assert all({"epoch", "split", "task", "loss"} <= set(r) for r in train_rows)
        assert all({"epoch", "split", "task", "weighted_f1"} <= set(r) for r in val_rows)

    def test_mtl_without_validation_runs_all_epochs(self):
        posts = tuple(
            make_post(i, fake=bool(i % 2)) if i % 2 else make_post(i) for i in range(24)
        )
        splits = SplitBundle(train=posts, validation=(), test=(), seed=0, ratios=(1.0, 0.0, 0.0))
        bundle = train(tiny_config("MTL", epochs=2), splits)
        assert max(r["epoch"] for r in bundle.history) == 2

    def test_non_finite_loss_aborts_with_diagnostic(self, synth_splits_small, monkeypatch):
        import hostility.strategies as strategies_module

        monkeypatch.setattr(
            strategies_module,
            "mlc_loss",
            lambda logits, targets: torch.tensor(float("nan")),
        )
        with pytest.raises(TrainingError, match="non-finite loss"):
            train(tiny_config("MLC", epochs=1), synth_splits_small)


def _hand_built_bc_bundle(coarse_prob: float, fine_prob: float) -> TrainedBundle:
    """BC bundle with zeroed weights and biases pinned to exact logits."""
    config = StrategyConfig(strategy="BC", encoder=EncoderSpec())
    units = {}
    for role in (COARSE_ROLE, *FINE_DIMENSIONS):
        enc = build_encoder(config.encoder, seed=0)
        head = ClassifierHead(32, 1, seed=0)
        prob = coarse_prob if role == COARSE_ROLE else fine_prob
        with torch.no_grad():
            head.weight.zero_()
            head.bias.fill_(math.log(prob / (1 - prob)))
        units[role] = TrainedUnit(role, enc, head)
    return TrainedBundle("BC", config, units)


class TestPredict:
    def test_gating_forces_fine_flags_false(self):
        bundle = _hand_built_bc_bundle(coarse_prob=0.2, fine_prob=0.9)
        posts = (make_post(1, fake=True), make_post(2))
        predictions = predict(bundle, posts)
        for pred in predictions:
            assert pred.coarse_prob == pytest.approx(0.2, abs=1e-6)
            assert not pred.labels.hostile
            assert not any(pred.labels.fine_flags())
            # ungated probabilities stay available for gold-subset evaluation
            assert pred.fine_probs["fake"] == pytest.approx(0.9, abs=1e-6)

    def test_threshold_rule(self):
        bundle = _hand_built_bc_bundle(coarse_prob=0.8, fine_prob=0.1)
        with torch.no_grad():
            bundle.units["fake"].head.bias.fill_(math.log(0.6 / 0.4))
        predictions = predict(bundle, (make_post(1, fake=True),))
        pred = next(iter(predictions))
        assert pred.labels.hostile
        assert pred.labels.fake
        assert not (pred.labels.hate or pred.labels.offensive or pred.labels.defamation)

    def test_custom_threshold(self):
        bundle = _hand_built_bc_bundle(coarse_prob=0.6, fine_prob=0.55)
        pred = next(iter(predict(bundle, (make_post(1, fake=True),), threshold=0.7)))
        assert not pred.labels.hostile

    def test_repeat_prediction_identical(self, synth_splits_small):
        bundle = train(tiny_config("MLC", epochs=1), synth_splits_small)
        a = predict(bundle, synth_splits_small.test)
        b = predict(bundle, synth_splits_small.test)
        for pa, pb in zip(a, b):
            assert pa == pb


class TestBundleSerialization:
    @pytest.mark.parametrize("strategy", ["MLC", "MTL", "BC", "AUX"])
    def test_save_load_roundtrip(self, strategy, synth_splits_small, tmp_path):
        bundle = train(tiny_config(strategy, epochs=1), synth_splits_small)
        bundle.save(tmp_path / strategy)
        loaded = TrainedBundle.load(tmp_path / strategy)
        assert loaded.strategy == strategy
        assert loaded.config == bundle.config
        for role in bundle.units:
            assert loaded.unit_fingerprint(role) == bundle.unit_fingerprint(role)
        original = predict(bundle, synth_splits_small.test[:10])
        reloaded = predict(loaded, synth_splits_small.test[:10])
        for pa, pb in zip(original, reloaded):
            assert pa == pb

    def test_metadata_records_shapes(self, synth_splits_small, tmp_path):
        bundle = train(tiny_config("AUX", epochs=1), synth_splits_small)
        bundle.save(tmp_path / "aux")
        meta = json.loads((tmp_path / "aux" / "bundle.json").read_text(encoding="utf-8"))
        widths = {entry["role"]: entry["head_input_width"] for entry in meta["units"]}
        assert widths[COARSE_ROLE] == 32
        assert all(widths[dim] == 33 for dim in FINE_DIMENSIONS)

    def test_architecture_validation_rejects_bad_bundle(self, synth_splits_small):
        bundle = train(tiny_config("MLC", epochs=1), synth_splits_small)
        with pytest.raises(StrategyError):
            TrainedBundle("BC", bundle.config, bundle.units)
