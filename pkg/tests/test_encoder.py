from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch

from hostility.encoder import (
    ClassifierHead,
    EncoderError,
    EncoderOutput,
    EncoderSpec,
    SequenceEncoder,
    TinyTransformerEncoder,
    TokenSequence,
    build_encoder,
    hash_bucket,
    head_forward,
    register_external_encoder,
)
from hostility.strategies import bce

GOLDEN_PATH = Path(__file__).parent / "golden" / "tiny_encoder_seed0.json"


@pytest.fixture(scope="module")
def tiny():
    return TinyTransformerEncoder(EncoderSpec(), seed=0)


class TestTokenize:
    def test_no_truncation(self, tiny):
        text = " ".join(f"w{i}" for i in range(50))
        assert tiny.tokenize_truncate(text).length == 51

    def test_truncated_to_max(self, tiny):
        text = " ".join(f"w{i}" for i in range(400))
        tokens = tiny.tokenize_truncate(text)
        assert tokens.length == 200

    def test_empty_text(self, tiny):
        tokens = tiny.tokenize_truncate("")
        assert tokens.token_ids == (0,)

    def test_start_token_prepended(self, tiny):
        tokens = tiny.tokenize_truncate("एक दो")
        assert tokens.token_ids[0] == 0
        assert all(t > 0 for t in tokens.token_ids[1:])

    def test_left_prefix_kept(self, tiny):
        words = [f"w{i}" for i in range(10)]
        tokens = tiny.tokenize_truncate(" ".join(words), max_length=4)
        expected = (0, *(hash_bucket(w) for w in words[:3]))
        assert tokens.token_ids == expected

    def test_deterministic(self, tiny):
        a = tiny.tokenize_truncate("भारत महान")
        b = tiny.tokenize_truncate("भारत महान")
        assert a == b

    def test_bad_max_length(self, tiny):
        with pytest.raises(EncoderError):
            tiny.tokenize_truncate("x", max_length=0)

    def test_empty_sequence_rejected(self):
        with pytest.raises(EncoderError):
            TokenSequence(())


class TestEncode:
    def test_shape_contract(self, tiny):
        tokens = tiny.tokenize_truncate("एक दो तीन")
        out = tiny.encode(tokens)
        assert out.token_reps.shape == (4, 32)
        assert out.first_token_rep.shape == (32,)
        assert torch.equal(out.first_token_rep, out.token_reps[0])

    def test_eval_determinism_bitwise(self, tiny):
        tokens = tiny.tokenize_truncate("वही पाठ फिर से")
        a = tiny.encode(tokens).token_reps
        b = tiny.encode(tokens).token_reps
        assert torch.equal(a, b)

    def test_finite(self, tiny):
        tokens = tiny.tokenize_truncate("कुछ भी")
        assert torch.isfinite(tiny.encode(tokens).token_reps).all()

    def test_out_of_range_token_id(self, tiny):
        with pytest.raises(EncoderError, match="9999"):
            tiny.encode_batch([TokenSequence((0, 9999))])

    def test_batch_first_rows_match_single(self, tiny):
        seqs = [tiny.tokenize_truncate(t) for t in ("एक", "दो तीन चार", "पाँच छह")]
        batch_first = tiny.encode_batch(seqs)
        for i, seq in enumerate(seqs):
            single = tiny.encode(seq).first_token_rep
            assert torch.allclose(batch_first[i], single, atol=1e-6)

    def test_golden_first_token_rep(self):
        golden = json.loads(GOLDEN_PATH.read_text(encoding="utf-8"))
        enc = TinyTransformerEncoder(EncoderSpec(), seed=golden["seed"])
        tokens = enc.tokenize_truncate(golden["text"])
        assert list(tokens.token_ids) == golden["token_ids"]
        rep = enc.encode(tokens).first_token_rep
        expected = torch.tensor(golden["first_token_rep"], dtype=rep.dtype)
        assert torch.allclose(rep, expected, rtol=1e-6, atol=1e-6)

    def test_seed_changes_weights(self):
        a = TinyTransformerEncoder(EncoderSpec(), seed=0)
        b = TinyTransformerEncoder(EncoderSpec(), seed=1)
        assert not torch.equal(a.embed, b.embed)


class TestClassifierHead:
    def test_zero_weight_passes_bias(self):
        head = ClassifierHead(8, 1, seed=0)
        with torch.no_grad():
            head.weight.zero_()
            head.bias.fill_(0.7)
        out = head(torch.randn(8))
        assert torch.allclose(out, torch.tensor([0.7]))

    def test_hand_arithmetic(self):
        head = ClassifierHead(2, 1, dropout_rate=0.3, seed=0)
        with torch.no_grad():
            head.weight.copy_(torch.tensor([[1.0, -1.0]]))
            head.bias.zero_()
        out = head(torch.tensor([0.3, 0.1]), mode="eval")
        assert torch.allclose(out, torch.tensor([0.2]))

    def test_eval_ignores_dropout_rate(self):
        rep = torch.randn(16)
        outs = []
        for rate in (0.0, 0.3, 0.9):
            head = ClassifierHead(16, 3, dropout_rate=rate, seed=5)
            outs.append(head(rep, mode="eval"))
        assert torch.equal(outs[0], outs[1])
        assert torch.equal(outs[0], outs[2])

    def test_dimension_mismatch(self):
        head = ClassifierHead(8, 1, seed=0)
        with pytest.raises(EncoderError, match="width"):
            head(torch.randn(9))

    def test_bad_mode(self):
        head = ClassifierHead(4, 1, seed=0)
        with pytest.raises(EncoderError, match="mode"):
            head(torch.randn(4), mode="predict")

    def test_invalid_construction(self):
        with pytest.raises(EncoderError):
            ClassifierHead(4, 0)
        with pytest.raises(EncoderError):
            ClassifierHead(4, 1, dropout_rate=1.0)

    def test_head_forward_wrapper(self):
        head = ClassifierHead(4, 2, seed=1)
        rep = torch.randn(4)
        assert torch.equal(head_forward(rep, head), head(rep))

    def test_dropout_expectation_matches_eval(self):
        # Inverted dropout is unbiased: averaging many train-mode outputs
        # recovers the eval output within sampling error.
        torch.manual_seed(0)
        head = ClassifierHead(32, 1, dropout_rate=0.3, seed=3)
        rep = torch.randn(32)
        eval_out = head(rep).item()
        gen = torch.Generator().manual_seed(99)
        draws = 10_000
        samples = torch.stack(
            [head(rep, mode="train", generator=gen) for _ in range(draws)]
        )[:, 0]
        mean = samples.mean().item()
        stderr = samples.std().item() / draws**0.5
        assert abs(mean - eval_out) <= 3 * max(stderr, 1e-9)

    def test_train_mode_deterministic_given_generator(self):
        head = ClassifierHead(8, 1, dropout_rate=0.5, seed=2)
        rep = torch.randn(8)
        a = head(rep, mode="train", generator=torch.Generator().manual_seed(7))
        b = head(rep, mode="train", generator=torch.Generator().manual_seed(7))
        assert torch.equal(a, b)


class TestGradientCheck:
    def test_head_gradients_match_finite_differences(self):
        # Double precision model, central differences with step 1e-4.
        torch.manual_seed(1)
        enc = TinyTransformerEncoder(EncoderSpec(), seed=4, dtype=torch.float64)
        head = ClassifierHead(32, 1, seed=4, dtype=torch.float64)
        tokens = enc.tokenize_truncate("एक दो तीन चार पाँच")

        def loss_value():
            rep = enc.encode_batch([tokens])
            return bce(head(rep)[0, 0], 1.0)

        loss = loss_value()
        loss.backward()
        step = 1e-4
        flat_grad = head.weight.grad.flatten()
        weight = head.weight.data.flatten()
        for idx in range(0, weight.numel(), 5):
            original = weight[idx].item()
            weight[idx] = original + step
            up = loss_value().item()
            weight[idx] = original - step
            down = loss_value().item()
            weight[idx] = original
            fd = (up - down) / (2 * step)
            an = flat_grad[idx].item()
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom < 1e-3


class TestSpecAndRegistry:
    def test_spec_roundtrip(self):
        spec = EncoderSpec(d=16, num_buckets=512, max_length=40, freeze=True)
        assert EncoderSpec.from_dict(spec.to_dict()) == spec

    def test_spec_validation(self):
        with pytest.raises(EncoderError):
            EncoderSpec(kind="mystery")
        with pytest.raises(EncoderError):
            EncoderSpec(d=0)
        with pytest.raises(EncoderError):
            EncoderSpec(max_length=0)

    def test_frozen_spec_has_no_trainable_parameters(self):
        enc = TinyTransformerEncoder(EncoderSpec(freeze=True), seed=0)
        assert enc.trainable_parameters() == []
        assert len(list(enc.parameters())) > 0

    def test_unregistered_external_encoder_fails(self):
        spec = EncoderSpec(kind="external-pretrained", name="missing-model")
        with pytest.raises(EncoderError, match="register_external_encoder"):
            build_encoder(spec)

    def test_registered_adapter_is_used(self):
        class StubEncoder(SequenceEncoder):
            def __init__(self, spec, seed):
                super().__init__()
                self.spec = spec
                self.seed = seed

            def tokenize_truncate(self, text, max_length=None):
                limit = max_length or self.spec.max_length
                ids = [0] + [1 for _ in text.split()]
                return TokenSequence(tuple(ids[:limit]))

            def encode_batch(self, sequences):
                return torch.zeros(len(sequences), self.spec.d)

            def encode(self, tokens):
                return EncoderOutput(torch.zeros(tokens.length, self.spec.d))

        register_external_encoder("stub-model", StubEncoder)
        spec = EncoderSpec(kind="external-pretrained", name="stub-model", d=8)
        enc = build_encoder(spec, seed=3)
        assert isinstance(enc, StubEncoder)
        assert enc.seed == 3
        assert enc.encode_batch([enc.tokenize_truncate("a b")]).shape == (1, 8)

    def test_hash_bucket_range_and_determinism(self):
        for word in ("भारत", "x", "घृणित"):
            bucket = hash_bucket(word, 4096)
            assert 1 <= bucket < 4096
            assert bucket == hash_bucket(word, 4096)
