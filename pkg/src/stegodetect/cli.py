"""Command-line entry point: generate, train, eval, predict, export-features.

Settings come from defaults, then an optional ``key = value`` config file
with ``[data]``, ``[model]`` and ``[train]`` sections, then ``--flags``.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import numerics as nx
from .corpus import (LabeledCorpus, ManifestEntry, build_vocab, load_tsteg_layout, sentences_from_text,
                     split as split_corpus, tokenize, write_manifest)
from .errors import DataError, StegoDetectError, StorageError, UsageError
from .evaluation import evaluate, export_features, sweep_bpw
from .network import ModelConfig, ModelParams, decide, predict_proba
from .persist import Checkpoint, load, save
from .stegogen import decode, synthesize, train_lm
from .training import TrainConfig, train

log = logging.getLogger("stegodetect")

SEED_ENV = "STEGODETECT_SEED"


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 3:
        raise UsageError(f"split ratios need three comma-separated numbers, got {text!r}")
    return tuple(parts)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


# section -> [(key, type, default, help)]
OPTIONS: dict[str, list[tuple[str, Callable, Any, str]]] = {
    "data": [
        ("data", Path, None, "corpus directory (one sentence per line files)"),
        ("manifest", Path, None, "manifest file (default: <data>/manifest.tsv)"),
        ("task", str, "binary", "binary (cover vs one bpw) or rate (6-way bpw)"),
        ("bpw", int, None, "stego rate for the binary task"),
        ("split_ratios", _ratios, (0.8, 0.1, 0.1), "train,val,test fractions"),
        ("max_vocab", int, 10_000, "vocabulary cap including PAD/UNK"),
        ("min_freq", int, 1, "minimum word count to enter the vocabulary"),
    ],
    "model": [
        ("arch", str, "birnn", "rnn (TS-RNN) or birnn (TS-BiRNN)"),
        ("embedding_dim", int, 256, "word vector size"),
        ("layers", int, None, "LSTM layers per direction (default 3 rnn / 2 birnn)"),
        ("units", int, None, "LSTM units per layer (default 200 rnn / 100 birnn)"),
        ("fused_dim", int, 128, "fused feature width"),
        ("threshold", float, 0.5, "stego decision threshold"),
    ],
    "train": [
        ("learning_rate", float, 0.001, "Adam step size"),
        ("batch_size", int, 128, "samples per batch"),
        ("dropout", float, 0.5, "dropout rate"),
        ("l2", float, 1e-4, "L2 coefficient on weight matrices"),
        ("max_epochs", int, 30, "epoch limit"),
        ("patience", int, 5, "epochs without validation gain before stopping"),
        ("clip_norm", float, 5.0, "global gradient norm cap"),
        ("seed", int, None, f"run seed (fallback: ${SEED_ENV}, then 0)"),
        ("precision", str, "float32", "float32 or float64"),
    ],
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]]

    def __getitem__(self, key: str) -> Any:
        for sect in self.values.values():
            if key in sect:
                return sect[key]
        raise KeyError(key)

    def to_ini(self) -> str:
        lines = []
        for sect, kv in self.values.items():
            lines.append(f"[{sect}]")
            for k, v in kv.items():
                if v is None:
                    continue
                if isinstance(v, (tuple, list)):
                    v = ",".join(str(x) for x in v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def resolve_config(args: argparse.Namespace, sections: tuple[str, ...]) -> RunConfig:
    """Merge defaults < config file < flags; resolve paths and the seed."""
    file_vals: dict[str, dict[str, str]] = {}
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        try:
            with open(args.config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise StorageError(f"cannot read config {args.config}: {exc}") from exc
        file_vals = {s: dict(cp[s]) for s in cp.sections()}
    values: dict[str, dict[str, Any]] = {}
    for sect in sections:
        values[sect] = {}
        for key, typ, default, _ in OPTIONS[sect]:
            v = default
            if key in file_vals.get(sect, {}):
                try:
                    v = typ(file_vals[sect][key])
                except ValueError as exc:
                    raise UsageError(f"config [{sect}] {key}: {exc}") from None
            flag = getattr(args, key, None)
            if flag is not None:
                v = flag
            values[sect][key] = v
    cfg = RunConfig(values)
    if "train" in values and values["train"]["seed"] is None:
        env = os.environ.get(SEED_ENV)
        try:
            values["train"]["seed"] = int(env) if env else 0
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer") from None
    if "model" in values:
        m = values["model"]
        bi = m["arch"] == "birnn"
        if m["layers"] is None:
            m["layers"] = 2 if bi else 3
        if m["units"] is None:
            m["units"] = 100 if bi else 200
    if "data" in values:
        d = values["data"]
        if d["data"] is not None:
            d["data"] = Path(d["data"]).resolve()
            d["manifest"] = Path(d["manifest"] or d["data"] / "manifest.tsv").resolve()
    return cfg


def _add_options(p: argparse.ArgumentParser, sections: tuple[str, ...]) -> None:
    for sect in sections:
        g = p.add_argument_group(sect)
        for key, typ, default, help_ in OPTIONS[sect]:
            flag = "--" + key.replace("_", "-")
            if key == "arch":
                g.add_argument(flag, choices=["rnn", "birnn"], default=None, help=f"{help_} [{default}]")
            elif key == "task":
                g.add_argument(flag, choices=["binary", "rate"], default=None, help=f"{help_} [{default}]")
            else:
                g.add_argument(flag, type=typ, default=None, help=f"{help_} [{default}]")


# ---------------------------------------------------------------- data helpers

def _task_corpus(corpus: LabeledCorpus, task: str, bpw: int | None) -> LabeledCorpus:
    if task == "binary":
        if bpw is None:
            raise UsageError("the binary task needs --bpw")
        return corpus.binary(bpw)
    if task == "rate":
        return corpus.rate()
    raise UsageError(f"unknown task {task!r}")


def _load_task(data: Path | None, manifest: Path | None, task: str, bpw: int | None) -> LabeledCorpus:
    if data is None:
        raise UsageError("--data is required")
    corpus = load_tsteg_layout(data, manifest or data / "manifest.tsv")
    if len(corpus) == 0:
        raise DataError(f"no samples found under {data}")
    return _task_corpus(corpus, task, bpw)


# ---------------------------------------------------------------- commands

def cmd_generate(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, "0"))
    texts = []
    for src in args.source:
        try:
            texts.append(Path(src).read_text(encoding="utf-8", errors="replace"))
        except OSError as exc:
            raise StorageError(f"cannot read source {src}: {exc}") from exc
    sentences = [s for t in texts for s in sentences_from_text(t)]
    lm = train_lm(sentences, args.order)
    bpws = _int_list(args.bpw)
    sents = synthesize(lm, args.per_class, bpws, seed, args.min_len, args.max_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for b in bpws:
        lines = [" ".join(s.tokens) for s in sents if s.bpw == b]
        (out / f"bpw{b}.txt").write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")
    write_manifest(out / "manifest.tsv", [ManifestEntry(f"bpw{b}.txt", "synthetic", b) for b in bpws])
    for b in bpws:
        print(f"bpw{b}\t{sum(1 for s in sents if s.bpw == b)}")
    if args.decode_check:
        bad = 0
        checked = 0
        for s in sents:
            if s.bpw == 0:
                continue
            checked += 1
            got = decode(lm, s.tokens, s.bpw)
            if got.bits != s.payload.bits:
                bad += 1
        print(f"decode-check\t{checked - bad}/{checked} payloads recovered")
        if bad:
            raise DataError(f"{bad} payloads failed to decode")
    return 0


def _model_config(cfg: RunConfig, vocab_size: int, num_classes: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        embedding_dim=cfg["embedding_dim"],
        bidirectional=cfg["arch"] == "birnn",
        num_layers=cfg["layers"],
        units=cfg["units"],
        fused_dim=cfg["fused_dim"],
        num_classes=num_classes,
        dropout_rate=cfg["dropout"],
        threshold=cfg["threshold"],
    )


def run_training(cfg: RunConfig, out: Path) -> tuple[Checkpoint, str]:
    nx.set_precision(cfg["precision"])
    task, bpw = cfg["task"], cfg["bpw"]
    corpus = _load_task(cfg["data"], cfg["manifest"], task, bpw)
    num_classes = 2 if task == "binary" else 6
    sp = split_corpus(corpus.labels, cfg["split_ratios"], cfg["seed"])
    vocab = build_vocab((corpus.samples[i].tokens for i in sp.train), cfg["max_vocab"], cfg["min_freq"])
    seqs = corpus.encode(vocab)
    mcfg = _model_config(cfg, len(vocab), num_classes)
    tcfg = TrainConfig(
        learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"], dropout=cfg["dropout"],
        l2_coeff=cfg["l2"], max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        clip_norm=cfg["clip_norm"], seed=cfg["seed"], precision=cfg["precision"],
    )
    params = ModelParams.initialize(mcfg, nx.Rng(cfg["seed"]).substream(7))
    result = train(params, seqs, corpus.labels, sp, tcfg,
                   on_epoch=lambda r: log.info("epoch\t%s", r.line()))
    extra = {
        "task": task, "bpw": bpw, "seed": cfg["seed"],
        "split_ratios": list(cfg["split_ratios"]), "best_epoch": result.best_epoch,
    }
    ckpt = Checkpoint(mcfg, vocab, result.params, extra)
    out.mkdir(parents=True, exist_ok=True)
    save(ckpt, out / "model.ckpt")
    (out / "train.log").write_text(result.log_text(), encoding="utf-8")
    return ckpt, result.log_text()


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ("data", "model", "train"))
    if cfg["data"] is None:
        raise UsageError("--data is required")
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    echo = cfg.to_ini()
    (out / "effective.ini").write_text(echo, encoding="utf-8")
    log.info("effective configuration:\n%s", echo)
    _, log_text = run_training(cfg, out)
    last = log_text.strip().splitlines()[-1].split("\t")
    print(f"checkpoint\t{out / 'model.ckpt'}")
    print(f"final_val_acc\t{last[2]}")
    return 0


def _checkpoint_task(ckpt: Checkpoint) -> tuple[str, int | None]:
    task = ckpt.extra.get("task") or ("binary" if ckpt.config.num_classes == 2 else "rate")
    expected = 2 if task == "binary" else 6
    if ckpt.config.num_classes != expected:
        raise DataError(f"checkpoint task {task!r} disagrees with its {ckpt.config.num_classes}-class head")
    return task, ckpt.extra.get("bpw")


def _eval_selection(args, ckpt: Checkpoint):
    task, bpw = _checkpoint_task(ckpt)
    if getattr(args, "bpw", None) is not None and task == "binary":
        bpw = args.bpw
    data = Path(args.data).resolve()
    corpus = _load_task(data, Path(args.manifest).resolve() if args.manifest else None, task, bpw)
    if max(corpus.labels) >= ckpt.config.num_classes:
        raise DataError("corpus labels exceed the checkpoint's class count")
    seed = ckpt.extra.get("seed", 0)
    ratios = tuple(ckpt.extra.get("split_ratios", (0.8, 0.1, 0.1)))
    idx = split_corpus(corpus.labels, ratios, seed).get(args.split)
    seqs = corpus.encode(ckpt.vocab)
    return task, bpw, corpus, idx, seqs


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load(args.checkpoint)
    task, bpw, corpus, idx, seqs = _eval_selection(args, ckpt)
    m = evaluate(ckpt.params, [seqs[i] for i in idx], [corpus.labels[i] for i in idx])
    if task == "binary":
        report = sweep_bpw({bpw: m}, [bpw])
        text = report.tsv()
        print(report.table())
    else:
        acc, p, r, f1 = m.headline()
        text = f"0-5\t{acc:.6f}\t{p:.6f}\t{r:.6f}\n"
        print(f"{'bpw':>4} {'Acc':>7} {'P':>7} {'R':>7} {'F1':>7}")
        print(f"{'0-5':>4} {acc:7.3f} {p:7.3f} {r:7.3f} {f1:7.3f}")
        print("confusion (rows true bpw, cols predicted):")
        for k, row in enumerate(m.confusion.counts):
            print(f"  {k}: " + " ".join(f"{c:5d}" for c in row))
    text += f"# f1\t{m.headline()[3]:.6f}\n"
    text += "".join("# confusion\t" + "\t".join(str(c) for c in row) + "\n" for row in m.confusion.counts)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    ckpt = load(args.checkpoint)
    if args.input and args.input != "-":
        try:
            lines = Path(args.input).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise StorageError(f"cannot read {args.input}: {exc}") from exc
    else:
        lines = sys.stdin.read().splitlines()
    encoded = [ckpt.vocab.encode(tokenize(ln)) for ln in lines]
    keep = [i for i, e in enumerate(encoded) if e]
    probs = predict_proba(ckpt.params, [encoded[i] for i in keep])
    by_line = dict(zip(keep, probs))
    out = []
    for i in range(len(lines)):
        if i not in by_line:
            out.append("skip\tempty after tokenization")
            continue
        p = by_line[i]
        if ckpt.config.num_classes == 2:
            out.append(f"{decide(float(p[1]), ckpt.config.threshold)}\t{float(p[1]):.6f}")
        else:
            k = int(np.argmax(p))
            out.append(f"{k}\t{float(p[k]):.6f}")
    text = "".join(ln + "\n" for ln in out)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_export_features(args: argparse.Namespace) -> int:
    ckpt = load(args.checkpoint)
    _, _, corpus, idx, seqs = _eval_selection(args, ckpt)
    n = export_features(ckpt.params, [seqs[i] for i in idx], [corpus.labels[i] for i in idx],
                        [corpus.samples[i].bpw for i in idx], args.out)
    print(f"features\t{n}\t{args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stegodetect", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize cover/stego corpora from source text")
    g.add_argument("--source", action="append", required=True, help="plain-text source for the n-gram LM")
    g.add_argument("--bpw", default="0,1,2,3,4,5", help="comma-separated rates; 0 = cover")
    g.add_argument("--per-class", type=int, default=2000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--order", type=int, default=3)
    g.add_argument("--min-len", type=int, default=8)
    g.add_argument("--max-len", type=int, default=40)
    g.add_argument("--out", default="corpus")
    g.add_argument("--decode-check", action="store_true", help="re-extract every payload and compare")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a detector or rate estimator")
    t.add_argument("--config", help="key = value config file with [data]/[model]/[train] sections")
    t.add_argument("--out", default="run")
    _add_options(t, ("data", "model", "train"))
    t.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "metrics on a split"),
                              ("export-features", cmd_export_features, "dump fused features")):
        e = sub.add_parser(name, help=help_)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--data", required=True)
        e.add_argument("--manifest")
        e.add_argument("--bpw", type=int, help="override the checkpoint's stego rate (binary models)")
        if name == "eval":
            e.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
            e.add_argument("--report", help="machine-readable report path")
        else:
            e.add_argument("--split", default="all", choices=["train", "val", "test", "all"])
            e.add_argument("--out", required=True)
        e.set_defaults(func=func)

    p = sub.add_parser("predict", help="label text lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="one sentence per line (default stdin)")
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except StegoDetectError as exc:
        print(f"stegodetect {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"stegodetect {args.command}: {exc}", file=sys.stderr)
        return StorageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
