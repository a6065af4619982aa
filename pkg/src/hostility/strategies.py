"""The four training strategies and their losses.

* MLC: one joint model with a 5-logit head, multi-label binary cross-entropy.
* MTL: one shared encoder with five single-logit heads, trained jointly with
  a gated loss (fine-grained terms contribute only on hostile examples).
* BC: five independent binary classifiers; the fine-grained four are trained
  on the hostile subset only.
* AUX: the coarse hostile/non-hostile model is trained first, frozen, and its
  raw logit is concatenated onto each fine-grained model's pooled
  representation before the classifier head (input width d+1).

All training is Adam over seeded shuffling, dropout, and initialization
streams, so identical config + seed + data reproduce identical parameters.
"""

from __future__ import annotations

import copy
import hashlib
import json
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import torch
from torch import Tensor

from .data import FINE_DIMENSIONS, LabeledPost, LabelSet, SplitBundle, hostile_subset
from .encoder import (
    ClassifierHead,
    EncoderSpec,
    SequenceEncoder,
    TokenSequence,
    build_encoder,
)
from . import metrics

STRATEGIES = ("MLC", "MTL", "BC", "AUX")

# Head logit order for the joint multi-label model.
MLC_LABEL_ORDER = ("hostile", "fake", "hate", "defamation", "offensive")
# Fine-grained task order inside the multi-task loss.
MTL_FINE_ORDER = ("hate", "defamation", "fake", "offensive")

JOINT_ROLE = "joint"
COARSE_ROLE = "coarse"

BUNDLE_META_NAME = "bundle.json"
BUNDLE_WEIGHTS_NAME = "weights.pt"
BUNDLE_HISTORY_NAME = "history.jsonl"

BatchHook = Callable[[str, Sequence[LabeledPost]], None]


class StrategyError(ValueError):
    """Invalid strategy configuration or bundle structure."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss, unusable training data)."""


# ---------------------------------------------------------------------------
# Losses


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return torch.as_tensor(value, dtype=torch.float64)


def bce(logit, target) -> Tensor:
    """Binary cross-entropy on a raw logit, in overflow-safe form.

    Equals ``-[y*log(sigmoid(x)) + (1-y)*log(1-sigmoid(x))]`` computed as
    ``max(x, 0) - x*y + log1p(exp(-|x|))``, which stays finite for any
    representable logit.
    """
    x = _as_tensor(logit)
    y = _as_tensor(target).to(x.dtype)
    return torch.clamp(x, min=0) - x * y + torch.log1p(torch.exp(-torch.abs(x)))


def mlc_loss(logits, targets) -> Tensor:
    """Multi-label loss: per example the sum of 5 BCE terms, mean over a batch.

    Logit/target order is :data:`MLC_LABEL_ORDER`.  Accepts a single example
    of shape (5,) or a batch of shape (B, 5).
    """
    x = _as_tensor(logits)
    y = _as_tensor(targets)
    if x.shape != y.shape or x.shape[-1] != len(MLC_LABEL_ORDER):
        raise StrategyError(
            f"expected matching (..., {len(MLC_LABEL_ORDER)}) logits and targets, "
            f"got {tuple(x.shape)} and {tuple(y.shape)}"
        )
    per_example = bce(x, y).sum(dim=-1)
    if per_example.dim() == 0:
        return per_example
    return per_example.mean()


def mtl_loss(coarse_logit, fine_logits, labels: LabelSet, lambda_fine: float = 0.5) -> Tensor:
    """Gated multi-task loss for one example.

    ``L_coarse + lam * mean(fine BCE)`` with ``lam = lambda_fine`` when the
    example is hostile and 0 otherwise, so fine-grained logits contribute no
    loss (and exactly zero gradient) on non-hostile examples.  Fine logit
    order is :data:`MTL_FINE_ORDER`; fine targets are the example's flags.
    """
    fine = _as_tensor(fine_logits)
    if fine.shape != (len(MTL_FINE_ORDER),):
        raise StrategyError(
            f"expected {len(MTL_FINE_ORDER)} fine logits, got shape {tuple(fine.shape)}"
        )
    coarse_target = 1.0 if labels.hostile else 0.0
    loss = bce(coarse_logit, coarse_target)
    gate = lambda_fine if labels.hostile else 0.0
    fine_targets = torch.tensor(
        [float(labels.flag(dim)) for dim in MTL_FINE_ORDER], dtype=fine.dtype
    )
    return loss + gate * bce(fine, fine_targets).mean()


def mtl_loss_batch(
    coarse_logits: Tensor,
    fine_logits: Tensor,
    hostile: Tensor,
    fine_targets: Tensor,
    lambda_fine: float,
) -> Tensor:
    """Vectorized gated loss, mean over the batch; gating by 0/1 hostile mask."""
    per_example = bce(coarse_logits, hostile) + (
        lambda_fine * hostile * bce(fine_logits, fine_targets).mean(dim=-1)
    )
    return per_example.mean()


def aux_fuse(rep: Tensor, coarse_logits: Tensor) -> Tensor:
    """Concatenate raw auxiliary-model logits onto a pooled representation."""
    if rep.dim() != coarse_logits.dim():
        raise StrategyError(
            f"rank mismatch: rep has {rep.dim()} dims, logits have {coarse_logits.dim()}"
        )
    if rep.dim() == 2 and rep.shape[0] != coarse_logits.shape[0]:
        raise StrategyError("batch size mismatch between rep and coarse logits")
    return torch.cat([rep, coarse_logits.to(rep.dtype)], dim=-1)


# ---------------------------------------------------------------------------
# Configuration and bundle types


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str
    learning_rate: float = 1e-5
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    lambda_fine: float = 0.5
    threshold: float = 0.5
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    early_stop_patience: int = 3

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise StrategyError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.learning_rate <= 0:
            raise StrategyError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise StrategyError("batch_size must be >= 1")
        if self.epochs < 1:
            raise StrategyError("epochs must be >= 1")
        if self.lambda_fine < 0:
            raise StrategyError("lambda_fine must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise StrategyError("threshold must lie strictly between 0 and 1")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "lambda_fine": self.lambda_fine,
            "threshold": self.threshold,
            "encoder": self.encoder.to_dict(),
            "early_stop_patience": self.early_stop_patience,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "StrategyConfig":
        payload = dict(payload)
        if "encoder" in payload and isinstance(payload["encoder"], Mapping):
            payload["encoder"] = EncoderSpec.from_dict(dict(payload["encoder"]))
        known = {k: payload[k] for k in cls.__dataclass_fields__ if k in payload}
        unknown = set(payload) - set(known)
        if unknown:
            raise StrategyError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**known)


@dataclass
class TrainedUnit:
    """One encoder+head pair keyed by its role in the bundle."""

    role: str
    encoder: SequenceEncoder
    head: ClassifierHead

    @property
    def k(self) -> int:
        return self.head.k

    @property
    def head_input_width(self) -> int:
        return self.head.in_width


def _state_fingerprint(modules: Mapping[str, torch.nn.Module]) -> str:
    digest = hashlib.sha256()
    for name in sorted(modules):
        state = modules[name].state_dict()
        for key in sorted(state):
            digest.update(name.encode())
            digest.update(key.encode())
            digest.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@dataclass
class TrainedBundle:
    """Model artifacts a strategy produces, plus the training history log."""

    strategy: str
    config: StrategyConfig
    units: dict[str, TrainedUnit]
    history: list[dict] = field(default_factory=list)
    shared_encoder: bool = False
    coarse_fingerprint: str | None = None

    def __post_init__(self) -> None:
        self.validate_architecture()

    def validate_architecture(self) -> None:
        d = self.config.encoder.d
        roles = set(self.units)
        if self.strategy == "MLC":
            if roles != {JOINT_ROLE} or self.units[JOINT_ROLE].k != 5:
                raise StrategyError("MLC bundle needs exactly one joint unit with k=5")
            if self.units[JOINT_ROLE].head_input_width != d:
                raise StrategyError("MLC head input width must equal encoder width")
        elif self.strategy in ("MTL", "BC", "AUX"):
            expected = {COARSE_ROLE, *FINE_DIMENSIONS}
            if roles != expected:
                raise StrategyError(f"{self.strategy} bundle needs roles {sorted(expected)}")
            for unit in self.units.values():
                if unit.k != 1:
                    raise StrategyError(f"{self.strategy} heads must emit one logit")
            if self.strategy == "MTL":
                encoders = {id(unit.encoder) for unit in self.units.values()}
                if len(encoders) != 1:
                    raise StrategyError("MTL units must share one encoder")
                widths = {unit.head_input_width for unit in self.units.values()}
                if widths != {d}:
                    raise StrategyError("MTL head input width must equal encoder width")
            else:
                encoders = {id(unit.encoder) for unit in self.units.values()}
                if len(encoders) != len(self.units):
                    raise StrategyError(f"{self.strategy} units must have independent encoders")
                if self.units[COARSE_ROLE].head_input_width != d:
                    raise StrategyError("coarse head input width must equal encoder width")
                fine_width = d + 1 if self.strategy == "AUX" else d
                for dim in FINE_DIMENSIONS:
                    if self.units[dim].head_input_width != fine_width:
                        raise StrategyError(
                            f"{self.strategy} fine head input width must be {fine_width}"
                        )

    def unit_fingerprint(self, role: str) -> str:
        unit = self.units[role]
        return _state_fingerprint({"encoder": unit.encoder, "head": unit.head})

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        weights: dict[str, dict] = {"units": {}}
        if self.shared_encoder:
            shared = next(iter(self.units.values())).encoder
            weights["shared_encoder"] = shared.state_dict()
        meta_units = []
        for role in sorted(self.units):
            unit = self.units[role]
            entry = {"head": unit.head.state_dict()}
            if not self.shared_encoder:
                entry["encoder"] = unit.encoder.state_dict()
            weights["units"][role] = entry
            meta_units.append(
                {
                    "role": role,
                    "k": unit.k,
                    "head_input_width": unit.head_input_width,
                    "dropout_rate": unit.head.dropout_rate,
                    "encoder": unit.encoder.spec.to_dict(),
                }
            )
        meta = {
            "strategy": self.strategy,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "shared_encoder": self.shared_encoder,
            "coarse_fingerprint": self.coarse_fingerprint,
            "units": meta_units,
        }
        (out_dir / BUNDLE_META_NAME).write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
        torch.save(weights, out_dir / BUNDLE_WEIGHTS_NAME)
        with (out_dir / BUNDLE_HISTORY_NAME).open("w", encoding="utf-8") as handle:
            for row in self.history:
                handle.write(json.dumps(row) + "\n")

    @classmethod
    def load(cls, bundle_dir: str | Path) -> "TrainedBundle":
        bundle_dir = Path(bundle_dir)
        meta = json.loads((bundle_dir / BUNDLE_META_NAME).read_text(encoding="utf-8"))
        weights = torch.load(bundle_dir / BUNDLE_WEIGHTS_NAME, weights_only=True)
        config = StrategyConfig.from_dict(meta["config"])
        shared = bool(meta["shared_encoder"])
        shared_encoder = None
        if shared:
            shared_encoder = build_encoder(config.encoder)
            shared_encoder.load_state_dict(weights["shared_encoder"])
        units: dict[str, TrainedUnit] = {}
        for entry in meta["units"]:
            role = entry["role"]
            spec = EncoderSpec.from_dict(entry["encoder"])
            if shared:
                enc = shared_encoder
            else:
                enc = build_encoder(spec)
                enc.load_state_dict(weights["units"][role]["encoder"])
            head = ClassifierHead(
                entry["head_input_width"], entry["k"], entry["dropout_rate"]
            )
            head.load_state_dict(weights["units"][role]["head"])
            units[role] = TrainedUnit(role=role, encoder=enc, head=head)
        history = []
        history_path = bundle_dir / BUNDLE_HISTORY_NAME
        if history_path.exists():
            for line in history_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    history.append(json.loads(line))
        return cls(
            strategy=meta["strategy"],
            config=config,
            units=units,
            history=history,
            shared_encoder=shared,
            coarse_fingerprint=meta.get("coarse_fingerprint"),
        )


# ---------------------------------------------------------------------------
# Prediction types


@dataclass(frozen=True)
class PostPrediction:
    post_id: str
    coarse_prob: float
    fine_probs: dict[str, float]
    labels: LabelSet


class PredictionSet:
    """Per-post probabilities plus gated thresholded labels."""

    def __init__(self, predictions: Sequence[PostPrediction], threshold: float) -> None:
        self.predictions = tuple(predictions)
        self.threshold = threshold
        self.by_id = {p.post_id: p for p in self.predictions}

    def __iter__(self):
        return iter(self.predictions)

    def __len__(self) -> int:
        return len(self.predictions)


# ---------------------------------------------------------------------------
# Training engine


def _unit_seed(seed: int, role: str, stream: str) -> int:
    return (seed * 1000003 + zlib.crc32(f"{role}:{stream}".encode())) % (2**63)


def _targets(corpus: Sequence[LabeledPost], dims: Sequence[str]) -> Tensor:
    rows = []
    for post in corpus:
        assert post.labels is not None
        rows.append([float(post.labels.flag(dim)) for dim in dims])
    return torch.tensor(rows, dtype=torch.float32)


def _tokenize(encoder: SequenceEncoder, corpus: Sequence[LabeledPost]) -> list[TokenSequence]:
    return [encoder.tokenize_truncate(post.text) for post in corpus]


class _Trainer:
    """Shared epoch loop: Adam, seeded shuffling, early stopping on the
    validation selection score, best-checkpoint snapshot/restore."""

    def __init__(
        self,
        config: StrategyConfig,
        role: str,
        corpus: Sequence[LabeledPost],
        modules: Mapping[str, torch.nn.Module],
        parameters: Sequence[torch.nn.Parameter],
        history: list[dict],
        batch_hook: BatchHook | None,
    ) -> None:
        self.config = config
        self.role = role
        self.corpus = corpus
        self.modules = dict(modules)
        self.parameters = [p for p in parameters if p.requires_grad]
        if not self.parameters:
            raise TrainingError(f"{role}: nothing to optimize (encoder frozen and no head?)")
        self.history = history
        self.batch_hook = batch_hook
        self.optimizer = torch.optim.Adam(self.parameters, lr=config.learning_rate)
        self.shuffle_rng = random.Random(f"{config.seed}:{role}:shuffle")
        self.dropout_generator = torch.Generator().manual_seed(
            _unit_seed(config.seed, role, "dropout")
        )

    def run(
        self,
        forward_loss: Callable[[Sequence[int], torch.Generator], Tensor],
        validate: Callable[[], dict[str, float] | None],
    ) -> None:
        config = self.config
        best_score: float | None = None
        best_state: dict | None = None
        stale = 0
        order = list(range(len(self.corpus)))
        for epoch in range(1, config.epochs + 1):
            self.shuffle_rng.shuffle(order)
            total_loss, batches = 0.0, 0
            for start in range(0, len(order), config.batch_size):
                batch = order[start : start + config.batch_size]
                if self.batch_hook is not None:
                    self.batch_hook(self.role, [self.corpus[i] for i in batch])
                loss = forward_loss(batch, self.dropout_generator)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss {loss.item()!r} at epoch {epoch}, "
                        f"role {self.role}, batch starting at {start}"
                    )
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()
                total_loss += float(loss.item())
                batches += 1
            self.history.append(
                {
                    "epoch": epoch,
                    "split": "train",
                    "task": self.role,
                    "loss": total_loss / max(batches, 1),
                }
            )
            scores = validate()
            if scores is None:
                continue
            for task, f1 in scores.items():
                self.history.append(
                    {"epoch": epoch, "split": "validation", "task": task, "weighted_f1": f1}
                )
            selection = sum(scores.values()) / len(scores)
            if best_score is None or selection > best_score:
                best_score = selection
                best_state = {
                    name: copy.deepcopy(module.state_dict())
                    for name, module in self.modules.items()
                }
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
        if best_state is not None:
            for name, module in self.modules.items():
                module.load_state_dict(best_state[name])


def _thresholded_weighted_f1(
    probs: Tensor, golds: Sequence[bool], threshold: float
) -> float:
    preds = [bool(p >= threshold) for p in probs.tolist()]
    return metrics.weighted_f1(preds, [bool(g) for g in golds])


def _encode_eval(
    encoder: SequenceEncoder, sequences: Sequence[TokenSequence], chunk: int = 64
) -> Tensor:
    reps = []
    with torch.no_grad():
        for start in range(0, len(sequences), chunk):
            reps.append(encoder.encode_batch(sequences[start : start + chunk]))
    return torch.cat(reps, dim=0)


def train(
    config: StrategyConfig,
    splits: SplitBundle,
    batch_hook: BatchHook | None = None,
) -> TrainedBundle:
    """Train a bundle per the configured strategy.

    ``batch_hook(role, posts)`` is invoked with every training batch before
    the forward pass (used by instrumentation and the fine-stage hostile-only
    assertions).
    """
    torch.manual_seed(config.seed)
    history: list[dict] = []
    if config.strategy == "MLC":
        units = _train_mlc(config, splits, history, batch_hook)
        return TrainedBundle("MLC", config, units, history)
    if config.strategy == "MTL":
        units = _train_mtl(config, splits, history, batch_hook)
        return TrainedBundle("MTL", config, units, history, shared_encoder=True)
    if config.strategy == "BC":
        units = _train_bc(config, splits, history, batch_hook)
        return TrainedBundle("BC", config, units, history)
    units, fingerprint = _train_aux(config, splits, history, batch_hook)
    return TrainedBundle("AUX", config, units, history, coarse_fingerprint=fingerprint)


def _fine_corpus(corpus: Sequence[LabeledPost], strategy: str) -> tuple[LabeledPost, ...]:
    subset = hostile_subset(corpus)
    if not subset:
        raise TrainingError(
            f"{strategy} fine-grained stages need hostile training posts, found none"
        )
    return subset


def _assert_hostile_batch(role: str, posts: Sequence[LabeledPost]) -> None:
    for post in posts:
        if post.labels is None or not post.labels.hostile:
            raise TrainingError(
                f"non-hostile post {post.id!r} reached the {role} fine-grained stage"
            )


def _train_mlc(config, splits, history, batch_hook) -> dict[str, TrainedUnit]:
    enc = build_encoder(config.encoder, seed=_unit_seed(config.seed, JOINT_ROLE, "encoder"))
    head = ClassifierHead(
        config.encoder.d,
        len(MLC_LABEL_ORDER),
        seed=_unit_seed(config.seed, JOINT_ROLE, "head"),
    )
    sequences = _tokenize(enc, splits.train)
    targets = _targets(splits.train, MLC_LABEL_ORDER)
    val_sequences = _tokenize(enc, splits.validation)
    val_targets = _targets(splits.validation, MLC_LABEL_ORDER) if splits.validation else None

    def forward_loss(batch, generator):
        reps = enc.encode_batch([sequences[i] for i in batch])
        logits = head(reps, mode="train", generator=generator)
        return mlc_loss(logits, targets[batch])

    def validate():
        if val_targets is None:
            return None
        reps = _encode_eval(enc, val_sequences)
        with torch.no_grad():
            probs = torch.sigmoid(head(reps))
        return {
            dim: _thresholded_weighted_f1(probs[:, j], val_targets[:, j] > 0.5, config.threshold)
            for j, dim in enumerate(MLC_LABEL_ORDER)
        }

    trainer = _Trainer(
        config,
        JOINT_ROLE,
        splits.train,
        {"encoder": enc, "head": head},
        [*enc.trainable_parameters(), *head.parameters()],
        history,
        batch_hook,
    )
    trainer.run(forward_loss, validate)
    return {JOINT_ROLE: TrainedUnit(JOINT_ROLE, enc, head)}


def _train_mtl(config, splits, history, batch_hook) -> dict[str, TrainedUnit]:
    enc = build_encoder(config.encoder, seed=_unit_seed(config.seed, "shared", "encoder"))
    heads = {
        COARSE_ROLE: ClassifierHead(
            config.encoder.d, 1, seed=_unit_seed(config.seed, COARSE_ROLE, "head")
        )
    }
    for dim in FINE_DIMENSIONS:
        heads[dim] = ClassifierHead(
            config.encoder.d, 1, seed=_unit_seed(config.seed, dim, "head")
        )
    sequences = _tokenize(enc, splits.train)
    hostile_t = _targets(splits.train, ("hostile",))[:, 0]
    fine_t = _targets(splits.train, MTL_FINE_ORDER)
    val_sequences = _tokenize(enc, splits.validation)

    def forward_loss(batch, generator):
        reps = enc.encode_batch([sequences[i] for i in batch])
        coarse_logits = heads[COARSE_ROLE](reps, mode="train", generator=generator)[:, 0]
        fine_logits = torch.cat(
            [heads[dim](reps, mode="train", generator=generator) for dim in MTL_FINE_ORDER],
            dim=-1,
        )
        return mtl_loss_batch(
            coarse_logits, fine_logits, hostile_t[batch], fine_t[batch], config.lambda_fine
        )

    def validate():
        if not splits.validation:
            return None
        reps = _encode_eval(enc, val_sequences)
        with torch.no_grad():
            scores = {}
            coarse = torch.sigmoid(heads[COARSE_ROLE](reps)[:, 0])
            golds = [post.labels.hostile for post in splits.validation]
            scores["hostile"] = _thresholded_weighted_f1(coarse, golds, config.threshold)
            fine_idx = [
                i for i, post in enumerate(splits.validation) if post.labels.hostile
            ]
            if fine_idx:
                sub = reps[fine_idx]
                for dim in FINE_DIMENSIONS:
                    probs = torch.sigmoid(heads[dim](sub)[:, 0])
                    golds_d = [
                        splits.validation[i].labels.flag(dim) for i in fine_idx
                    ]
                    scores[dim] = _thresholded_weighted_f1(probs, golds_d, config.threshold)
        return scores

    parameters = list(enc.trainable_parameters())
    for head in heads.values():
        parameters.extend(head.parameters())
    modules = {"encoder": enc, **{f"head_{role}": h for role, h in heads.items()}}
    trainer = _Trainer(
        config, "multitask", splits.train, modules, parameters, history, batch_hook
    )
    trainer.run(forward_loss, validate)
    return {
        role: TrainedUnit(role, enc, heads[role]) for role in (COARSE_ROLE, *FINE_DIMENSIONS)
    }


def _train_binary_unit(
    config: StrategyConfig,
    role: str,
    train_corpus: Sequence[LabeledPost],
    val_corpus: Sequence[LabeledPost],
    target_dim: str,
    history: list[dict],
    batch_hook: BatchHook | None,
    head_width_extra: int = 0,
    fusion_logits: Tensor | None = None,
    val_fusion_logits: Tensor | None = None,
    guard_hostile: bool = False,
) -> TrainedUnit:
    enc = build_encoder(config.encoder, seed=_unit_seed(config.seed, role, "encoder"))
    head = ClassifierHead(
        config.encoder.d + head_width_extra,
        1,
        seed=_unit_seed(config.seed, role, "head"),
    )
    sequences = _tokenize(enc, train_corpus)
    targets = _targets(train_corpus, (target_dim,))[:, 0]
    val_sequences = _tokenize(enc, val_corpus)

    def forward_loss(batch, generator):
        if guard_hostile:
            _assert_hostile_batch(role, [train_corpus[i] for i in batch])
        reps = enc.encode_batch([sequences[i] for i in batch])
        if fusion_logits is not None:
            reps = aux_fuse(reps, fusion_logits[batch])
        logits = head(reps, mode="train", generator=generator)[:, 0]
        return bce(logits, targets[batch]).mean()

    def validate():
        if not val_corpus:
            return None
        reps = _encode_eval(enc, val_sequences)
        if val_fusion_logits is not None:
            reps = aux_fuse(reps, val_fusion_logits)
        with torch.no_grad():
            probs = torch.sigmoid(head(reps)[:, 0])
        golds = [post.labels.flag(target_dim) for post in val_corpus]
        return {target_dim: _thresholded_weighted_f1(probs, golds, config.threshold)}

    trainer = _Trainer(
        config,
        role,
        train_corpus,
        {"encoder": enc, "head": head},
        [*enc.trainable_parameters(), *head.parameters()],
        history,
        batch_hook,
    )
    trainer.run(forward_loss, validate)
    return TrainedUnit(role, enc, head)


def _train_bc(config, splits, history, batch_hook) -> dict[str, TrainedUnit]:
    units = {
        COARSE_ROLE: _train_binary_unit(
            config, COARSE_ROLE, splits.train, splits.validation, "hostile",
            history, batch_hook,
        )
    }
    fine_train = _fine_corpus(splits.train, "BC")
    fine_val = hostile_subset(splits.validation) if splits.validation else ()
    for dim in FINE_DIMENSIONS:
        units[dim] = _train_binary_unit(
            config, dim, fine_train, fine_val, dim, history, batch_hook,
            guard_hostile=True,
        )
    return units


def _frozen_coarse_logits(
    unit: TrainedUnit, corpus: Sequence[LabeledPost]
) -> Tensor:
    """Raw auxiliary logits for a corpus, computed once (the model is frozen)."""
    sequences = _tokenize(unit.encoder, corpus)
    reps = _encode_eval(unit.encoder, sequences)
    with torch.no_grad():
        return unit.head(reps)


def _train_aux(config, splits, history, batch_hook):
    coarse = _train_binary_unit(
        config, COARSE_ROLE, splits.train, splits.validation, "hostile",
        history, batch_hook,
    )
    for parameter in (*coarse.encoder.parameters(), *coarse.head.parameters()):
        parameter.requires_grad_(False)
    fingerprint = _state_fingerprint({"encoder": coarse.encoder, "head": coarse.head})

    fine_train = _fine_corpus(splits.train, "AUX")
    fine_val = hostile_subset(splits.validation) if splits.validation else ()
    train_logits = _frozen_coarse_logits(coarse, fine_train)
    val_logits = _frozen_coarse_logits(coarse, fine_val) if fine_val else None

    units = {COARSE_ROLE: coarse}
    for dim in FINE_DIMENSIONS:
        units[dim] = _train_binary_unit(
            config, dim, fine_train, fine_val, dim, history, batch_hook,
            head_width_extra=1,
            fusion_logits=train_logits,
            val_fusion_logits=val_logits,
            guard_hostile=True,
        )
    return units, fingerprint


# ---------------------------------------------------------------------------
# Prediction


def predict(
    bundle: TrainedBundle,
    posts: Sequence[LabeledPost],
    threshold: float | None = None,
) -> PredictionSet:
    """Coarse and fine probabilities per post, plus gated thresholded labels.

    Gating keeps the label-coupling invariant: when the coarse prediction is
    non-hostile every fine flag is forced false.  The raw (ungated) fine
    probabilities stay available for gold-subset evaluation.
    """
    threshold = bundle.config.threshold if threshold is None else threshold
    n = len(posts)
    if n == 0:
        return PredictionSet((), threshold)
    coarse_probs: Tensor
    fine_probs: dict[str, Tensor] = {}

    if bundle.strategy == "MLC":
        unit = bundle.units[JOINT_ROLE]
        reps = _encode_eval(unit.encoder, _tokenize(unit.encoder, posts))
        with torch.no_grad():
            probs = torch.sigmoid(unit.head(reps))
        order = {dim: j for j, dim in enumerate(MLC_LABEL_ORDER)}
        coarse_probs = probs[:, order["hostile"]]
        for dim in FINE_DIMENSIONS:
            fine_probs[dim] = probs[:, order[dim]]
    elif bundle.strategy == "MTL":
        enc = bundle.units[COARSE_ROLE].encoder
        reps = _encode_eval(enc, _tokenize(enc, posts))
        with torch.no_grad():
            coarse_probs = torch.sigmoid(bundle.units[COARSE_ROLE].head(reps)[:, 0])
            for dim in FINE_DIMENSIONS:
                fine_probs[dim] = torch.sigmoid(bundle.units[dim].head(reps)[:, 0])
    else:  # BC or AUX
        coarse_unit = bundle.units[COARSE_ROLE]
        reps = _encode_eval(coarse_unit.encoder, _tokenize(coarse_unit.encoder, posts))
        with torch.no_grad():
            coarse_logits = coarse_unit.head(reps)
            coarse_probs = torch.sigmoid(coarse_logits[:, 0])
        for dim in FINE_DIMENSIONS:
            unit = bundle.units[dim]
            fine_reps = _encode_eval(unit.encoder, _tokenize(unit.encoder, posts))
            if bundle.strategy == "AUX":
                fine_reps = aux_fuse(fine_reps, coarse_logits)
            with torch.no_grad():
                fine_probs[dim] = torch.sigmoid(unit.head(fine_reps)[:, 0])

    predictions = []
    for i in range(n):
        coarse_p = float(coarse_probs[i])
        fine_p = {dim: float(fine_probs[dim][i]) for dim in FINE_DIMENSIONS}
        hostile = coarse_p >= threshold
        flags = {
            dim: bool(hostile and fine_p[dim] >= threshold) for dim in FINE_DIMENSIONS
        }
        predictions.append(
            PostPrediction(
                post_id=posts[i].id,
                coarse_prob=coarse_p,
                fine_probs=fine_p,
                labels=LabelSet(hostile=hostile, **flags),
            )
        )
    return PredictionSet(predictions, threshold)
