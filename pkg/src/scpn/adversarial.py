"""Downstream robustness: a biLSTM classifier, broken-example evaluation
against controlled paraphrases, and training-set augmentation."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import torch
from torch import nn

from . import grammar
from .checkpoint import FORMAT_VERSION, CheckpointError, pack_params, read_manifest, unpack_params
from .corpus import PAD, UNK, Vocab, build_vocab, normalize
from .errors import ScpnError
from .fileio import atomic_write, write_lines
from .filters import EmbeddingScorer, FilterConfig, postprocess
from .net import LstmCell, init_uniform, run_lstm
from .parsegen import paraphrase_with_template
from .syntax import ParseTree, Template

log = logging.getLogger(__name__)


class DegenerateLabels(ScpnError):
    pass


class BadTaskLine(ScpnError):
    pass


@dataclass(frozen=True)
class TaskInstance:
    text_a: str
    label: int
    text_b: Optional[str] = None

    def __post_init__(self):
        if not self.text_a.strip():
            raise ValueError("text_a is empty")
        if self.label < 0:
            raise ValueError("label must be a non-negative class id")

    def to_tsv(self) -> str:
        cols = [str(self.label), self.text_a] + ([self.text_b] if self.text_b is not None else [])
        return "\t".join(cols)


def load_task_tsv(path) -> list[TaskInstance]:
    """``label<TAB>text_a[<TAB>text_b]`` per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise BadTaskLine(f"line {lineno}: expected 2 or 3 columns, got {len(cols)}")
            try:
                label = int(cols[0])
                out.append(TaskInstance(cols[1], label, cols[2] if len(cols) == 3 else None))
            except ValueError as err:
                raise BadTaskLine(f"line {lineno}: {err}") from err
    return out


def write_task_tsv(path, instances: Sequence[TaskInstance]) -> None:
    write_lines(path, (i.to_tsv() for i in instances))


# --------------------------------------------------------------------------
# classifier


@dataclass
class ClassifierConfig:
    hidden_size: int = 300
    emb_size: int = 100
    embedding_path: Optional[str] = None  # "token v1 .. vd" lines; random init otherwise
    seed: int = 0
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    clip: float = 5.0
    num_classes: int = 0  # 0: inferred from the training labels

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.emb_size < 1:
            raise ValueError("emb_size must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ClassifierConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def tokenize(text: str) -> list[str]:
    return normalize(text).split()


class BiLstmClassifier(nn.Module):
    """Sentence vector = [final forward state ; final backward state]; a pair
    task concatenates the two sentence vectors before the linear head."""

    def __init__(self, vocab_size: int, num_classes: int, config: ClassifierConfig, pair: bool):
        super().__init__()
        self.config = config
        self.pair = pair
        self.num_classes = num_classes
        self.emb = nn.Embedding(vocab_size, config.emb_size)
        self.fwd = LstmCell(config.emb_size, config.hidden_size)
        self.bwd = LstmCell(config.emb_size, config.hidden_size)
        self.head = nn.Linear(2 * config.hidden_size * (2 if pair else 1), num_classes)
        init_uniform(self, config.seed)

    def encode(self, ids: torch.Tensor) -> torch.Tensor:
        mask = ids != PAD
        x = self.emb(ids)
        _, (hf, _) = run_lstm(self.fwd, x, mask)
        _, (hb, _) = run_lstm(self.bwd, x, mask, reverse=True)
        return torch.cat([hf, hb], dim=-1)

    def forward(self, ids_a: torch.Tensor, ids_b: Optional[torch.Tensor] = None) -> torch.Tensor:
        rep = self.encode(ids_a)
        if self.pair:
            rep = torch.cat([rep, self.encode(ids_b)], dim=-1)
        return self.head(rep)


@dataclass
class Classifier:
    model: BiLstmClassifier
    vocab: Vocab
    history: list = field(default_factory=list)
    heldout_accuracy: Optional[float] = None

    @property
    def config(self) -> ClassifierConfig:
        return self.model.config

    def _ids(self, texts: Sequence[str]) -> torch.Tensor:
        seqs = [self.vocab.encode(tokenize(t)) or [UNK] for t in texts]
        width = max(len(s) for s in seqs)
        return torch.tensor([s + [PAD] * (width - len(s)) for s in seqs], dtype=torch.long)

    def logits(self, instances: Sequence[TaskInstance]) -> torch.Tensor:
        ids_a = self._ids([i.text_a for i in instances])
        ids_b = self._ids([i.text_b or "" for i in instances]) if self.model.pair else None
        return self.model(ids_a, ids_b)

    @torch.no_grad()
    def predict(self, instances: Sequence[TaskInstance], batch_size: int = 256) -> list[int]:
        self.model.eval()
        out: list[int] = []
        for k in range(0, len(instances), batch_size):
            out += self.logits(instances[k : k + batch_size]).argmax(-1).tolist()
        return out

    def accuracy(self, instances: Sequence[TaskInstance]) -> float:
        if not instances:
            raise ScpnError("cannot score an empty set")
        preds = self.predict(instances)
        return 100.0 * sum(p == i.label for p, i in zip(preds, instances)) / len(instances)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        table, blob = pack_params(self.model)
        self.vocab.save(directory / "vocab.txt")
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "classifier",
            "config": self.config.to_dict(),
            "num_classes": self.model.num_classes,
            "pair": self.model.pair,
            "params": table,
            "files": {"vocab": "vocab.txt"},
            "history": self.history,
            "heldout_accuracy": self.heldout_accuracy,
        }
        atomic_write(directory / "params.bin", blob)
        atomic_write(directory / "manifest.json", json.dumps(manifest, indent=2).encode("utf-8"))


def load_classifier(directory) -> Classifier:
    directory = Path(directory)
    manifest, blob = read_manifest(directory)
    if manifest.get("kind") != "classifier":
        raise CheckpointError(f"{directory}: not a classifier checkpoint")
    vocab = Vocab.load(directory / manifest["files"]["vocab"])
    config = ClassifierConfig.from_dict(manifest["config"])
    model = BiLstmClassifier(len(vocab), manifest["num_classes"], config, manifest["pair"])
    unpack_params(model, manifest["params"], blob)
    model.eval()
    return Classifier(model, vocab, manifest.get("history", []), manifest.get("heldout_accuracy"))


def load_vectors(path) -> dict[str, np.ndarray]:
    return EmbeddingScorer.from_file(path).vectors


def _init_embeddings(model: BiLstmClassifier, vocab: Vocab, path: str) -> None:
    vectors = load_vectors(path)
    dim = len(next(iter(vectors.values())))
    if dim != model.config.emb_size:
        raise ScpnError(f"{path}: vectors have size {dim}, emb_size is {model.config.emb_size}")
    with torch.no_grad():
        for tok, vec in vectors.items():
            if tok in vocab:
                model.emb.weight[vocab.id(tok)] = torch.as_tensor(vec, dtype=model.emb.weight.dtype)


def train_classifier(
    train: Sequence[TaskInstance],
    config: ClassifierConfig = ClassifierConfig(),
    heldout: Optional[Sequence[TaskInstance]] = None,
) -> Classifier:
    labels = {i.label for i in train}
    if len(labels) < 2:
        raise DegenerateLabels(f"training set has {len(labels)} distinct label(s)")
    num_classes = config.num_classes or max(labels) + 1
    if max(labels) >= num_classes:
        raise ScpnError(f"label {max(labels)} outside {num_classes} classes")
    pair = any(i.text_b is not None for i in train)
    texts = [tokenize(i.text_a) for i in train] + [tokenize(i.text_b) for i in train if i.text_b]
    vocab = build_vocab(texts)
    torch.manual_seed(config.seed)
    model = BiLstmClassifier(len(vocab), num_classes, config, pair)
    if config.embedding_path:
        _init_embeddings(model, vocab, config.embedding_path)
    clf = Classifier(model, vocab)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = random.Random(config.seed)
    order = list(range(len(train)))
    for epoch in range(1, config.epochs + 1):
        model.train()
        rng.shuffle(order)
        total = 0.0
        for k in range(0, len(order), config.batch_size):
            batch = [train[j] for j in order[k : k + config.batch_size]]
            target = torch.tensor([i.label for i in batch])
            loss = nn.functional.cross_entropy(clf.logits(batch), target)
            if not math.isfinite(loss.item()):
                raise ScpnError(f"classifier loss became {loss.item()} in epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            if config.clip:
                nn.utils.clip_grad_norm_(model.parameters(), config.clip)
            opt.step()
            total += loss.item() * len(batch)
        record = {"epoch": epoch, "loss": total / len(train)}
        clf.history.append(record)
        log.info(json.dumps({"event": "epoch", "kind": "classifier", **record}))
    model.eval()
    if heldout:
        clf.heldout_accuracy = clf.accuracy(heldout)
    return clf


# --------------------------------------------------------------------------
# paraphrase sources


class ParaphraseSource(Protocol):
    def paraphrases(self, text: str, template: Template) -> list[str]:
        """Filtered paraphrases of ``text`` under ``template``, best first."""


SentenceParser = Callable[[str], Optional[ParseTree]]


class PipelineSource:
    """Template -> parse generator -> paraphraser -> filters.

    Keeps the best ``per_template`` surviving candidates that differ from the
    input; results are cached per (text, template).
    """

    def __init__(
        self,
        scpn,
        generator,
        parser: Optional[SentenceParser] = None,
        filter_config: FilterConfig = FilterConfig(),
        scorer: Optional[EmbeddingScorer] = None,
        beam_size: Optional[int] = None,
        per_template: int = 1,
    ):
        self.scpn = scpn
        self.generator = generator
        self.parser = parser or grammar.CkyParser().parse
        self.filter_config = filter_config
        self.scorer = scorer or EmbeddingScorer.from_config(filter_config)
        self.beam_size = beam_size
        self.per_template = per_template
        self._cache: dict[tuple[str, str], list[str]] = {}

    def paraphrases(self, text: str, template: Template) -> list[str]:
        key = (text, template.serialize())
        if key not in self._cache:
            self._cache[key] = self._generate(text, template)
        return list(self._cache[key])

    def _generate(self, text: str, template: Template) -> list[str]:
        p1 = self.parser(normalize(text))
        if p1 is None:
            raise ScpnError(f"no parse for {text!r}")
        cands = paraphrase_with_template(self.scpn, self.generator, text, p1, template, self.beam_size)
        norm = normalize(text)
        kept = postprocess(((norm, c.text, c.score) for c in cands if c.text != norm), self.filter_config, self.scorer)
        return [k.paraphrase for k in kept[: self.per_template]]


class StaticSource:
    """Paraphrases looked up from a fixed table ``{(text, template string): [paraphrases]}``."""

    def __init__(self, table: Optional[dict] = None):
        self.table = table or {}

    def paraphrases(self, text: str, template: Template) -> list[str]:
        return list(self.table.get((text, template.serialize()), []))


def sample_templates(top: Sequence[Template], k: int = 10, seed: int = 0) -> list[Template]:
    """``k`` templates drawn without replacement (all of them if fewer)."""
    if not top:
        raise ScpnError("no templates to sample from")
    return random.Random(seed).sample(list(top), min(k, len(top)))


# --------------------------------------------------------------------------
# broken examples


@dataclass
class ExampleRecord:
    x: str
    y_true: int
    y_x: int
    paraphrases: list = field(default_factory=list)  # [(template, text, y_x')]
    broken: bool = False
    errors: list = field(default_factory=list)  # [(template, message)]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass
class AdversarialReport:
    records: list
    accuracy: float  # on the original examples
    correct: int
    broken: int

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def broken_pct(self) -> float:
        """Headline: broken / correctly classified originals."""
        return 100.0 * self.broken / self.correct if self.correct else 0.0

    @property
    def broken_pct_all(self) -> float:
        return 100.0 * self.broken / self.n if self.n else 0.0

    def header(self) -> str:
        return (
            f"n={self.n} correct={self.correct} broken={self.broken} "
            f"broken%={self.broken_pct:.1f} (of correctly classified) "
            f"broken%all={self.broken_pct_all:.1f} (of all)"
        )


def _gather(source: ParaphraseSource, text: str, templates: Sequence[Template]):
    found, errors = [], []
    for t in templates:
        try:
            for p in source.paraphrases(text, t):
                found.append((t.serialize(), p))
        except Exception as err:  # recorded per example, never aborts the run
            errors.append((t.serialize(), f"{type(err).__name__}: {err}"))
    return found, errors


def evaluate_broken(
    classifier: Classifier,
    eval_set: Sequence[TaskInstance],
    source: ParaphraseSource,
    templates: Sequence[Template],
) -> AdversarialReport:
    """An example is broken when its original prediction is correct and at
    least one paraphrase of ``text_a`` is predicted incorrectly."""
    if not templates:
        raise ScpnError("templates must be nonempty")
    preds = classifier.predict(eval_set)
    records = []
    variants: list[TaskInstance] = []
    owners: list[int] = []
    for idx, (inst, y) in enumerate(zip(eval_set, preds)):
        rec = ExampleRecord(inst.text_a, inst.label, y)
        found, rec.errors = _gather(source, inst.text_a, templates)
        for tmpl, text in found:
            rec.paraphrases.append([tmpl, text, None])
            variants.append(TaskInstance(text, inst.label, inst.text_b))
            owners.append(idx)
        records.append(rec)
    slots = [p for rec in records for p in rec.paraphrases]
    for slot, y in zip(slots, classifier.predict(variants) if variants else []):
        slot[2] = y
    for rec in records:
        rec.paraphrases = [tuple(p) for p in rec.paraphrases]
        rec.broken = rec.y_x == rec.y_true and any(p[2] != rec.y_true for p in rec.paraphrases)
        assert not rec.broken or rec.y_x == rec.y_true
    correct = sum(r.y_x == r.y_true for r in records)
    broken = sum(r.broken for r in records)
    acc = 100.0 * correct / len(records) if records else 0.0
    return AdversarialReport(records, acc, correct, broken)


def augment_training(
    train: Sequence[TaskInstance],
    source: ParaphraseSource,
    templates: Sequence[Template],
) -> list[TaskInstance]:
    """Originals, then every surviving paraphrase with its source's label
    (unit weight), in example then template order."""
    extra = []
    for inst in train:
        found, errors = _gather(source, inst.text_a, templates)
        for tmpl, msg in errors:
            log.info(json.dumps({"event": "augment_error", "text": inst.text_a, "template": tmpl, "error": msg}))
        extra += [TaskInstance(text, inst.label, inst.text_b) for _, text in found]
    return list(train) + extra


# --------------------------------------------------------------------------
# before/after report


@dataclass
class RobustnessReport:
    before_accuracy: float
    before_broken: AdversarialReport
    after_accuracy: float
    after_broken: AdversarialReport
    train_size: int
    augmented_size: int
    embedding_init: str = "random"

    def table(self) -> str:
        rows = [
            ("Model", "Validity", "Test Acc", "Dev Broken"),
            ("baseline", "-", f"{self.before_accuracy:.1f}", f"{self.before_broken.broken_pct:.1f}"),
            ("+ SCPN augmentation", "-", f"{self.after_accuracy:.1f}", f"{self.after_broken.broken_pct:.1f}"),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append(
            f"Dev Broken = broken / correctly classified dev examples; "
            f"of all dev examples: {self.before_broken.broken_pct_all:.1f} -> {self.after_broken.broken_pct_all:.1f}"
        )
        lines.append(
            f"train {self.train_size} -> {self.augmented_size} instances; embeddings: {self.embedding_init}; "
            f"validity not measured"
        )
        return "\n".join(lines)

    def records(self) -> list[dict]:
        out = []
        for phase, rep in (("before", self.before_broken), ("after", self.after_broken)):
            out += [{"phase": phase, **dataclasses.asdict(r)} for r in rep.records]
        return out


def robustness_report(
    train: Sequence[TaskInstance],
    dev: Sequence[TaskInstance],
    test: Sequence[TaskInstance],
    source: ParaphraseSource,
    templates: Sequence[Template],
    config: ClassifierConfig = ClassifierConfig(),
    retrain_seed_offset: int = 0,
) -> RobustnessReport:
    """Baseline vs augmented classifier.  The retrained model is initialised
    from ``config.seed + retrain_seed_offset``."""
    base = train_classifier(train, config)
    before = evaluate_broken(base, dev, source, templates)
    augmented = augment_training(train, source, templates)
    cfg2 = dataclasses.replace(config, seed=config.seed + retrain_seed_offset)
    aug = train_classifier(augmented, cfg2)
    after = evaluate_broken(aug, dev, source, templates)
    return RobustnessReport(
        base.accuracy(test),
        before,
        aug.accuracy(test),
        after,
        len(train),
        len(augmented),
        "file" if config.embedding_path else "random",
    )


# --------------------------------------------------------------------------
# synthetic sentiment task


def sentiment_task(n: int, seed: int = 0, form: str = "sbar_front") -> list[TaskInstance]:
    """"SUB A , B ." sentences whose label is the polarity of the main clause B
    (1 positive, 0 negative); the subordinate clause's polarity is independent.

    The label is invariant to reordering the clauses, while a classifier
    trained on one order can key on position instead of clause role.
    """
    rng = random.Random(seed)
    sampler = grammar.FrameSampler(rng)
    realizer = grammar.Realizer(rng)
    pools = (grammar.VERBS_NEGATIVE, grammar.VERBS_POSITIVE)
    out = []
    for k in range(n):
        label = k % 2
        sub = sampler.clause(pp_prob=0.2, adv_prob=0.2, verbs=pools[rng.random() < 0.5])
        main = sampler.clause(pp_prob=0.2, adv_prob=0.2, verbs=pools[label])
        frame = grammar.Frame("sub", (sub, main), rng.choice(sorted(grammar.SUBORDINATORS)))
        out.append(TaskInstance(grammar.sentence_of(realizer.realize(frame, form)), label))
    rng.shuffle(out)
    return out
