"""Command-line entry point: ``scpn <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or model error.
Settings come from built-in defaults, then an optional INI file
(``--config``, sections ``[scpn]``, ``[classifier]``, ``[filter]``,
``[synth]``), then explicit flags.  Each run echoes its resolved settings
next to its outputs.
"""
from __future__ import annotations

import argparse
import configparser
import contextlib
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import ScpnError

log = logging.getLogger("scpn")


class UsageError(ScpnError):
    pass


class UnknownCommand(UsageError):
    pass


class MissingFlag(UsageError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message:
            raise UnknownCommand(f"{self.prog}: {message}")
        if "required" in message:
            raise MissingFlag(f"{self.prog}: {message}")
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# configuration


def _coerce(value: str, like):
    if isinstance(like, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if value.strip().lower() in ("", "none"):
        return None
    return value


def resolve(cls, ini: configparser.ConfigParser, section: str, overrides: dict):
    """Dataclass defaults <- INI section <- non-None flag overrides."""
    base = cls()
    values = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if ini.has_section(section):
        for key, raw in ini.items(section):
            if key not in fields:
                raise ValueError(f"[{section}] unknown key {key!r}")
            values[key] = _coerce(raw, getattr(base, key))
    values.update({k: v for k, v in overrides.items() if v is not None and k in fields})
    return dataclasses.replace(base, **values)


def _read_ini(path: Optional[str]) -> configparser.ConfigParser:
    ini = configparser.ConfigParser()
    if path:
        if not Path(path).is_file():
            raise ScpnError(f"config file not found: {path}")
        ini.read(path, encoding="utf-8")
    return ini


def echo_config(path, sections: dict) -> None:
    """Write the resolved settings as INI (sorted keys, so the file is reproducible)."""
    from .fileio import atomic_write

    ini = configparser.ConfigParser()
    for name, obj in sections.items():
        data = dataclasses.asdict(obj) if dataclasses.is_dataclass(obj) else dict(obj)
        ini[name] = {k: _fmt(v) for k, v in sorted(data.items())}
    buf = io.StringIO()
    ini.write(buf)
    atomic_write(path, buf.getvalue().encode("utf-8"))


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "none" if v is None else str(v)


@contextlib.contextmanager
def _json_log(path):
    """Route the package's structured records (one JSON object per line) to ``path``."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler.addFilter(lambda rec: rec.getMessage().startswith("{"))
    logger = logging.getLogger("scpn")
    previous = logger.level
    logger.setLevel(logging.INFO)
    logger.addHandler(handler)
    try:
        yield
    finally:
        logger.removeHandler(handler)
        logger.setLevel(previous)
        handler.close()


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ScpnError(f"{flag}: {path} does not exist")
    return p


# --------------------------------------------------------------------------
# commands


def cmd_synth(args, ini) -> None:
    from .corpus import SynthGrammarConfig, synth_corpus, write_pairs_tsv

    out = Path(args.out)
    if args.task == "sentiment":
        from .adversarial import sentiment_task, write_task_tsv

        n = args.n or 1000
        write_task_tsv(out, sentiment_task(n, args.seed, args.form))
        settings = {"task": "sentiment", "seed": args.seed, "n": n, "form": args.form}
        echo_config(out.with_name(out.name + ".config.ini"), {"synth": settings})
        print(f"wrote {n} task instances to {out}")
        return
    overrides = {"seed": args.seed, "num_pairs": args.n, "identity_rate": args.identity_rate}
    if args.transformations:
        overrides["transformations"] = tuple(t.strip() for t in args.transformations.split(","))
    cfg = resolve(SynthGrammarConfig, ini, "synth", overrides)
    write_pairs_tsv(out, synth_corpus(cfg))
    echo_config(out.with_name(out.name + ".config.ini"), {"synth": cfg})
    print(f"wrote {cfg.num_pairs} pairs to {out}")


def cmd_label(args, ini) -> None:
    from .corpus import load_pairs_tsv
    from .fileio import atomic_write, write_lines
    from .syntax import TemplateHistogram, template_entropy, write_templates

    examples = load_pairs_tsv(_require_file(args.pairs, "--pairs"))
    out = Path(args.out_dir)
    write_lines(out / "templated.tsv", (f"{ex.to_tsv()}\t{ex.t2.serialize()}" for ex in examples))
    hist = TemplateHistogram.from_parses(ex.p2 for ex in examples)
    top = hist.most_common(args.top_k)
    write_templates(out / "templates.txt", top)
    report = {
        "pairs": len(examples),
        "distinct_templates": len(hist.counts),
        "entropy_bits": template_entropy(hist),
        "top": [{"template": t.serialize(), "count": hist.counts[t]} for t in top],
    }
    atomic_write(out / "entropy.json", (json.dumps(report, indent=2) + "\n").encode("utf-8"))
    echo_config(out / "run_config.ini", {"label": {"pairs": args.pairs, "top_k": args.top_k}})
    print(f"{len(hist.counts)} templates, entropy {report['entropy_bits']:.4f} bits")


def cmd_bpe_train(args, ini) -> None:
    from .corpus import load_pairs_tsv
    from .subword import bpe_train

    examples = load_pairs_tsv(_require_file(args.pairs, "--pairs"))
    model = bpe_train([s for ex in examples for s in (ex.s1, ex.s2)], args.merges)
    out = Path(args.out)
    model.save(out)
    echo_config(out.with_name(out.name + ".config.ini"), {"bpe": {"pairs": args.pairs, "merges": args.merges}})
    print(f"learned {len(model.merges)} merges")


def _scpn_config(args, ini):
    from .model import ScpnConfig

    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "max_steps": args.max_steps,
        "beam_size": args.beam,
        "enc_hidden": args.hidden,
        "dec_hidden": args.dec_hidden,
    }
    if args.no_parse_attention:
        overrides["use_parse_attention"] = False
    if args.no_copy:
        overrides["use_copy"] = False
    return resolve(ScpnConfig, ini, "scpn", overrides)


def cmd_train(args, ini) -> None:
    from .corpus import add_reversed, load_pairs_tsv
    from .paraphraser import build_vocabularies, train_scpn
    from .parsegen import train_parse_generator
    from .subword import DEFAULT_MERGES, BpeModel

    examples = load_pairs_tsv(_require_file(args.pairs, "--pairs"))
    if not args.no_reverse:
        examples = add_reversed(examples)
    cfg = _scpn_config(args, ini)
    out = Path(args.out)
    with _json_log(out / "log.jsonl"):
        bpe = BpeModel.load(_require_file(args.merges_file, "--merges-file")) if args.merges_file else None
        bpe, word_vocab, parse_vocab = build_vocabularies(examples, args.merges or DEFAULT_MERGES, 1, bpe)
        if args.model == "scpn":
            ckpt = train_scpn(examples, cfg, bpe, word_vocab, parse_vocab)
        else:
            ckpt = train_parse_generator(examples, cfg, parse_vocab)
        ckpt.save(out)
    echo_config(out / "run_config.ini", {"scpn": ckpt.config, "run": {"pairs": args.pairs, "model": args.model}})
    final = ckpt.history[-1]["loss"] if ckpt.history else float("nan")
    print(f"trained {args.model}: final loss {final:.4f}, saved to {out}")


def _filter_config(args, ini):
    from .filters import FilterConfig

    return resolve(
        FilterConfig,
        ini,
        "filter",
        {"min_ngram_overlap": args.min_overlap, "min_similarity": args.min_similarity, "embedding_path": args.embeddings},
    )


def cmd_paraphrase(args, ini) -> None:
    from .checkpoint import load_checkpoint
    from .corpus import normalize
    from .filters import EmbeddingScorer, postprocess
    from .grammar import CkyParser
    from .parsegen import paraphrase_with_template
    from .syntax import Template, parse_bracketed, strip_leaves

    scpn = load_checkpoint(args.scpn)
    generator = load_checkpoint(args.parsegen) if args.parsegen else None
    sentence = normalize(args.sentence)
    if args.parse:
        p1 = strip_leaves(parse_bracketed(args.parse))
    else:
        p1 = CkyParser().parse(sentence)
        if p1 is None:
            raise ScpnError("--parse is required for sentences outside the built-in grammar")
    gold = strip_leaves(parse_bracketed(args.gold_parse)) if args.gold_parse else None
    if gold is None and not args.template:
        raise MissingFlag("paraphrase: one of --template or --gold-parse is required")
    if gold is None and generator is None:
        raise MissingFlag("paraphrase: --parsegen is required with --template")
    fcfg = _filter_config(args, ini)
    scorer = EmbeddingScorer.from_config(fcfg, seed=args.seed or 0)
    templates = [Template.parse(t) for t in args.template] if gold is None else [None]
    for t in templates:
        cands = paraphrase_with_template(scpn, generator, sentence, p1, t, args.beam, gold_parse=gold)
        kept = postprocess(((sentence, c.text, c.score) for c in cands), fcfg, scorer)
        label = t.serialize() if t is not None else "gold parse"
        print(f"# {label}: {len(kept)} of {len(cands)} candidates kept")
        for rank, k in enumerate(kept, 1):
            print(f"{rank}\t{k.paraphrase}\tscore={k.score:.4f}\toverlap={k.overlap:.4f}\tsimilarity={k.similarity:.4f}")


def cmd_eval_template_match(args, ini) -> None:
    from .checkpoint import load_checkpoint
    from .corpus import load_pairs_tsv
    from .evaluation import evaluate_template_match
    from .fileio import write_lines
    from .grammar import CkyParser

    examples = load_pairs_tsv(_require_file(args.pairs, "--pairs"))
    if args.limit:
        examples = examples[: args.limit]
    rep = evaluate_template_match(
        load_checkpoint(args.scpn), load_checkpoint(args.parsegen), examples, CkyParser().parse, args.beam
    )
    print(rep.table())
    if args.out_dir:
        out = Path(args.out_dir)
        write_lines(out / "report.txt", rep.table().splitlines())
        write_lines(out / "records.jsonl", (json.dumps(dataclasses.asdict(r)) for r in rep.records))
        echo_config(out / "run_config.ini", {"eval": {"pairs": args.pairs, "limit": args.limit, "beam": args.beam}})


def _source_and_templates(args, ini):
    from .adversarial import PipelineSource, sample_templates
    from .checkpoint import load_checkpoint
    from .filters import EmbeddingScorer
    from .syntax import read_templates

    fcfg = _filter_config(args, ini)
    source = PipelineSource(
        load_checkpoint(args.scpn),
        load_checkpoint(args.parsegen),
        filter_config=fcfg,
        scorer=EmbeddingScorer.from_config(fcfg, seed=args.seed or 0),
        beam_size=args.beam,
    )
    top = read_templates(_require_file(args.templates, "--templates"))[: args.top_k]
    templates = sample_templates(top, args.num_templates, args.seed or 0)
    return source, templates, fcfg


def _classifier_config(args, ini):
    from .adversarial import ClassifierConfig

    return resolve(
        ClassifierConfig,
        ini,
        "classifier",
        {"seed": args.seed, "hidden_size": args.hidden, "epochs": args.epochs, "embedding_path": args.clf_embeddings},
    )


def cmd_adversarial(args, ini) -> None:
    from .adversarial import (
        augment_training,
        evaluate_broken,
        load_classifier,
        load_task_tsv,
        robustness_report,
        train_classifier,
        write_task_tsv,
    )
    from .fileio import write_lines

    out = Path(args.out_dir)
    if args.action == "train":
        cfg = _classifier_config(args, ini)
        heldout = load_task_tsv(_require_file(args.dev, "--dev")) if args.dev else None
        with _json_log(out / "log.jsonl"):
            clf = train_classifier(load_task_tsv(_require_file(args.train, "--train")), cfg, heldout)
        clf.save(out)
        echo_config(out / "run_config.ini", {"classifier": cfg})
        print(f"held-out accuracy: {clf.heldout_accuracy}")
        return
    source, templates, fcfg = _source_and_templates(args, ini)
    settings = {"filter": fcfg, "run": {"templates": [t.serialize() for t in templates], "beam": args.beam}}
    if args.action == "break":
        if not args.classifier:
            raise MissingFlag("adversarial break: --classifier is required")
        rep = evaluate_broken(load_classifier(args.classifier), load_task_tsv(_require_file(args.eval, "--eval")), source, templates)
        write_lines(out / "records.jsonl", (r.to_json() for r in rep.records))
        write_lines(out / "report.txt", [rep.header()])
        print(rep.header())
    elif args.action == "augment":
        train = load_task_tsv(_require_file(args.train, "--train"))
        augmented = augment_training(train, source, templates)
        write_task_tsv(out / "augmented.tsv", augmented)
        print(f"{len(train)} -> {len(augmented)} instances")
    else:
        cfg = _classifier_config(args, ini)
        settings["classifier"] = cfg
        data = [load_task_tsv(_require_file(getattr(args, k), f"--{k}")) for k in ("train", "dev", "eval")]
        with _json_log(out / "log.jsonl"):
            rep = robustness_report(*data, source, templates, cfg)
        write_lines(out / "report.txt", rep.table().splitlines())
        write_lines(out / "records.jsonl", (json.dumps(r) for r in rep.records()))
        print(rep.table())
    echo_config(out / "run_config.ini", settings)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    common.add_argument("--config", default=None, help="INI settings file")

    p = _Parser(prog="scpn", description="Syntactically controlled paraphrase toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--n", type=int, default=None, help="number of pairs (or task instances)")
    s.add_argument("--out", default="pairs.tsv")
    s.add_argument("--transformations", default=None, help="comma-separated subset")
    s.add_argument("--identity-rate", type=float, default=None)
    s.add_argument("--task", choices=("paraphrase", "sentiment"), default="paraphrase")
    s.add_argument("--form", choices=("sbar_front", "sbar_back"), default="sbar_front", help="sentiment task clause order")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("label", parents=[common], help="template-label a pair file")
    s.add_argument("--pairs", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--top-k", type=int, default=20)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("bpe-train", parents=[common], help="learn BPE merges")
    s.add_argument("--pairs", required=True)
    s.add_argument("--merges", type=int, default=8000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bpe_train)

    s = sub.add_parser("train", parents=[common], help="train the paraphraser or the parse generator")
    s.add_argument("--model", choices=("scpn", "parsegen"), required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--merges-file", default=None)
    s.add_argument("--merges", type=int, default=None)
    s.add_argument("--no-parse-attention", action="store_true")
    s.add_argument("--no-copy", action="store_true")
    s.add_argument("--no-reverse", action="store_true", help="do not add reversed pairs")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--batch-size", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--beam", type=int, default=None)
    s.add_argument("--hidden", type=int, default=None, help="encoder hidden size per direction")
    s.add_argument("--dec-hidden", type=int, default=None)
    s.set_defaults(func=cmd_train)

    def filter_flags(s):
        s.add_argument("--min-overlap", type=float, default=None)
        s.add_argument("--min-similarity", type=float, default=None)
        s.add_argument("--embeddings", default=None, help="word/trigram vector file")

    s = sub.add_parser("paraphrase", parents=[common], help="paraphrase one sentence")
    s.add_argument("--scpn", required=True)
    s.add_argument("--parsegen", default=None)
    s.add_argument("--sentence", required=True)
    s.add_argument("--parse", default=None, help="bracketed parse of the sentence")
    s.add_argument("--template", action="append", default=[], help="target template, e.g. '(S(NP)(VP)(.))'")
    s.add_argument("--gold-parse", default=None, help="full target parse; skips the parse generator")
    s.add_argument("--beam", type=int, default=None)
    filter_flags(s)
    s.set_defaults(func=cmd_paraphrase)

    s = sub.add_parser("eval-template-match", parents=[common], help="template accuracy report")
    s.add_argument("--scpn", required=True)
    s.add_argument("--parsegen", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--limit", type=int, default=0)
    s.add_argument("--beam", type=int, default=None)
    s.add_argument("--out-dir", default=None)
    s.set_defaults(func=cmd_eval_template_match)

    s = sub.add_parser("adversarial", parents=[common], help="classifier robustness experiments")
    s.add_argument("action", choices=("train", "break", "augment", "report"))
    s.add_argument("--out-dir", required=True)
    s.add_argument("--train", default=None, help="task TSV: label, text_a[, text_b]")
    s.add_argument("--dev", default=None)
    s.add_argument("--eval", default=None, help="evaluation (break) or test (report) set")
    s.add_argument("--classifier", default=None, help="classifier checkpoint directory")
    s.add_argument("--scpn", default=None)
    s.add_argument("--parsegen", default=None)
    s.add_argument("--templates", default=None, help="ranked template file")
    s.add_argument("--top-k", type=int, default=20)
    s.add_argument("--num-templates", type=int, default=10)
    s.add_argument("--beam", type=int, default=None)
    s.add_argument("--hidden", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--clf-embeddings", default=None, help="classifier embedding init file")
    filter_flags(s)
    s.set_defaults(func=cmd_adversarial)
    return p


_NEEDS = {
    "train": ("train",),
    "break": ("eval", "scpn", "parsegen", "templates"),
    "augment": ("train", "scpn", "parsegen", "templates"),
    "report": ("train", "dev", "eval", "scpn", "parsegen", "templates"),
}


def _setup_stderr_logging(verbose: bool) -> None:
    logger = logging.getLogger("scpn")
    for h in [h for h in logger.handlers if getattr(h, "_scpn_stderr", False)]:
        logger.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(logging.INFO if verbose else logging.WARNING)
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler._scpn_stderr = True
    logger.addHandler(handler)
    logger.propagate = False


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "adversarial":
            missing = [f"--{k}" for k in _NEEDS[args.action] if getattr(args, k) is None]
            if missing:
                raise MissingFlag(f"adversarial {args.action}: missing {', '.join(missing)}")
        _setup_stderr_logging(args.verbose)
        ini = _read_ini(args.config)
        if args.seed is None and ini.has_option("run", "seed"):
            args.seed = ini.getint("run", "seed")
        if args.seed is None:
            args.seed = 0
        args.func(args, ini)
        return 0
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    except (ScpnError, OSError, ValueError, configparser.Error) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())
