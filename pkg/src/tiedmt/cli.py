"""Command-line experiment runner: ``tiedmt {train,decode,eval,worddisc,inspect-attn,synth}``.

Every hyperparameter is a flag.  ``--config FILE`` supplies ``key = value``
defaults that explicit flags override.  Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import tensor as tn
from .attention import attention_mass_in_spans, format_attention, write_attention
from .corpus import (Vocabs, build_vocabs, load_parallel, read_config, read_folds, to_triples)
from .decoding import BeamConfig, decode_single, default_max_len, two_phase_decode
from .errors import ConfigError, TiedError
from .evaluation import (char_bleu, corpus_cer, sequence_accuracy, word_bleu, word_discovery_prf,
                         boundary_prf)
from .models import (ArchitectureConfig, ModelConfig, ScoreConfig, SentenceTriple, TiedModel,
                     check_regularizers, load_checkpoint, save_checkpoint)
from .nn import SpeechEncoderConfig
from .training import TrainConfig, train
from .worddisc import DiscoveryOptions, Segmentation, discover

log = logging.getLogger("tiedmt")

OUTDIR_ENV = "TIEDMT_OUTDIR"


class UsageError(Exception):
    pass


# -- argument groups -------------------------------------------------------

def _add_data_args(p, need_dev=True):
    g = p.add_argument_group("data")
    g.add_argument("--train", metavar="PREFIX", help="training files PREFIX.<ext>")
    if need_dev:
        g.add_argument("--dev", metavar="PREFIX", help="dev files PREFIX.<ext>")
    g.add_argument("--test", metavar="PREFIX", help="test files, decoded after training")
    g.add_argument("--folds", metavar="MANIFEST", help="cross-validation fold manifest")
    g.add_argument("--src-ext", default="src")
    g.add_argument("--tgt1-ext", default="tr1")
    g.add_argument("--tgt2-ext", default="tr2")
    g.add_argument("--source-kind", choices=("text", "speech"), default="text")


def _add_model_args(p, arch_default="single"):
    g = p.add_argument_group("model")
    g.add_argument("--arch", choices=("single", "multitask", "cascade", "triangle"), default=arch_default)
    g.add_argument("--reconstruction", action="store_true",
                   help="cascade whose second target is the source")
    g.add_argument("--src-emb", type=int, default=32)
    g.add_argument("--trg-emb", type=int, default=64)
    g.add_argument("--enc-hidden", type=int, default=64)
    g.add_argument("--enc-layers", type=int, default=1)
    g.add_argument("--dec-hidden", type=int, default=64)
    g.add_argument("--dec-layers", type=int, default=1)
    g.add_argument("--att-dim", type=int, default=64)
    g.add_argument("--temperature", type=float, default=1.0, help="attention softmax temperature")
    g.add_argument("--speech-dim", type=int, default=39)
    g.add_argument("--speech-hidden", type=int, nargs=3, default=[128, 128, 512],
                   metavar=("L1", "L2", "L3"))
    g = p.add_argument_group("objective")
    g.add_argument("--lambda", dest="lam", type=float, default=0.5)
    g.add_argument("--trans-reg", type=float, nargs="?", const=0.2, default=0.0,
                   help="transitivity weight (0.2 when given without a value)")
    g.add_argument("--inv-reg", type=float, nargs="?", const=0.2, default=0.0,
                   help="invertibility weight (0.2 when given without a value)")


def _add_train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, default=0.0002)
    g.add_argument("--dropout", type=float, default=0.2)
    g.add_argument("--epochs", type=int, default=None, help="default 500 for speech, 40 for text")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--clip", type=float, default=5.0)
    g.add_argument("--select", choices=("loss", "cer", "bleu"), default="loss")
    g.add_argument("--save-every", type=int, default=1)
    g.add_argument("--outdir", default="run")
    g.add_argument("--plot", action="store_true", help="also write train_curve.png")


def _add_beam_args(p):
    g = p.add_argument_group("search")
    g.add_argument("--beam", type=int, default=4)
    g.add_argument("--alpha", type=float, default=0.8, help="length-normalisation weight")
    g.add_argument("--mode", choices=("joint", "first-1best"), default="joint")
    g.add_argument("--max-len", type=int, default=None)
    g.add_argument("--raw-joint", action="store_true",
                   help="combine raw instead of length-normalised log-probabilities")


def build_parser():
    parser = argparse.ArgumentParser(prog="tiedmt", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, keeping the best dev checkpoint")
    p.add_argument("--config", help="key = value defaults")
    _add_data_args(p)
    _add_model_args(p)
    _add_train_args(p)
    _add_beam_args(p)

    p = sub.add_parser("decode", help="beam-search decode a source file")
    p.add_argument("--config")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True, help="one source per line")
    p.add_argument("--output", "-o", help="TSV output (default stdout)")
    p.add_argument("--dump-attn", metavar="DIR")
    _add_beam_args(p)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--config")
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--hyp-column", type=int, default=None,
                   help="1-based TSV column of the hypothesis (e.g. 2 for decode output)")
    p.add_argument("--metric", action="append", choices=("cer", "bleu", "wordbleu", "acc"))
    p.add_argument("--no-space", action="store_true", help="drop the space symbol for char BLEU")
    p.add_argument("--space-symbol", default="_")
    p.add_argument("--segs", help="discovered segmentation file")
    p.add_argument("--gold", help="gold segmentation file")

    p = sub.add_parser("worddisc", help="train (or load) a model and segment from its attention")
    p.add_argument("--config")
    _add_data_args(p)
    _add_model_args(p)
    _add_train_args(p)
    _add_beam_args(p)
    p.add_argument("--ckpt", help="skip training and use this checkpoint")
    p.add_argument("--direction", choices=("base", "reverse"), default="base")
    p.add_argument("--combine", action="store_true", help="reconstruction model, A = A1 + A12^T")
    p.add_argument("--smooth-attn", action="store_true", help="train with attention temperature 10")
    p.add_argument("--extract-temperature", type=float, default=None)
    p.add_argument("--no-post-smooth", action="store_true")
    p.add_argument("--include-eos", action="store_true")
    p.add_argument("--gold", help="gold segmentation of the discovery corpus")
    p.add_argument("--output", "-o")
    # symbols in PREFIX.src, words in PREFIX.tr2 (the synth layout)
    p.set_defaults(tgt1_ext="tr2")

    p = sub.add_parser("inspect-attn", help="print attention matrices for one utterance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True, help="source line (space-separated symbols)")
    p.add_argument("--tgt1", help="force-decode this first target instead of searching")
    p.add_argument("--tgt2")
    p.add_argument("--spans", help="gold spans 'r0:r1,c0:c1;...' for attention mass of each matrix")
    p.add_argument("--outdir", help="also write <name>.txt matrices here")
    _add_beam_args(p)

    p = sub.add_parser("synth", help="write the synthetic transduction corpus")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=int, nargs=3, default=[1000, 100, 100])
    p.add_argument("--alphabet", type=int, default=10)
    p.add_argument("--lexicon", type=int, default=12)
    p.add_argument("--max-len", type=int, default=12)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        conf = read_config(cfg_path)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest: a for a in sub._actions}
        opts = {s.lstrip("-"): a for a in sub._actions for s in a.option_strings}
        defaults = {}
        for key, raw in conf.items():
            action = opts.get(key) or dests.get(key.replace("-", "_"))
            if action is None:
                parser.error(f"unknown key {key!r} in config {cfg_path}")
            defaults[action.dest] = _convert(action, raw)
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _convert(action, raw):
    if isinstance(action, (argparse._StoreTrueAction,)):
        return raw.lower() in ("1", "true", "yes", "on")
    if action.nargs in (3, "+", "*"):
        return [action.type(x) if action.type else x for x in raw.split()]
    if raw.lower() == "none":
        return None
    return action.type(raw) if action.type else raw


def dump_config(args, path):
    skip = {"command", "config", "log_level"}
    lines = []
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        key = k.replace("_", "-")
        if isinstance(v, list):
            v = " ".join(str(x) for x in v)
        lines.append(f"{key} = {v}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# -- helpers ---------------------------------------------------------------

def _files(prefix, args, with_t2):
    return (f"{prefix}.{args.src_ext}", f"{prefix}.{args.tgt1_ext}",
            f"{prefix}.{args.tgt2_ext}" if with_t2 else None)


def _model_config(args, vocabs: Vocabs):
    arch = ArchitectureConfig(args.arch, args.reconstruction)
    h = args.speech_hidden
    return ModelConfig(
        arch=arch, source=args.source_kind,
        src_vocab=len(vocabs.src) if vocabs.src else 0,
        trg1_vocab=len(vocabs.trg1),
        trg2_vocab=len(vocabs.trg2) if vocabs.trg2 else 0,
        src_emb=args.src_emb, trg_emb=args.trg_emb, enc_hidden=args.enc_hidden,
        enc_layers=args.enc_layers, dec_hidden=args.dec_hidden, dec_layers=args.dec_layers,
        att_dim=args.att_dim, temperature=args.temperature,
        speech=SpeechEncoderConfig(args.speech_dim, h[0], h[1], h[2]),
    )


def _beam_config(args, lam=0.5):
    return BeamConfig(beam=args.beam, alpha=args.alpha, max_len=args.max_len, mode=args.mode,
                      lam=lam, raw_joint=args.raw_joint)


def _max_len(model, x, override):
    return override or default_max_len(len(x), model.config.source)


def decode_triple(model, x, beam: BeamConfig):
    """Returns ``(hyp1, hyp2 or None, score)``."""
    if model.dec2 is None:
        h = decode_single(model, x, beam, _max_len(model, x, beam.max_len))
        return h, None, h.score
    m1 = _max_len(model, x, beam.max_len)
    m2 = beam.max_len or (len(x) + 1 if model.config.arch.reconstruction else m1)
    r = two_phase_decode(model, x, beam, m1, m2)
    return r.y1, r.y2, r.score


def _dev_metric(args, dev, vocabs):
    if args.select == "loss":
        return None
    beam = _beam_config(args, args.lam)

    def metric(model):
        hyps, refs = [], []
        for t in dev:
            h1, _, _ = decode_triple(model, t.x, beam)
            hyps.append(vocabs.trg1.decode(h1.tokens))
            refs.append(vocabs.trg1.decode(t.y1))
        if args.select == "cer":
            return corpus_cer(hyps, refs)
        return -char_bleu(hyps, refs)

    return metric


def _outdir(args):
    return os.environ.get(OUTDIR_ENV) or args.outdir


def _validate_train_args(args):
    if args.epochs is None:
        args.epochs = 500 if args.source_kind == "speech" else 40
    try:
        arch = ArchitectureConfig(args.arch, args.reconstruction)
        check_regularizers(arch, ScoreConfig(args.lam, args.trans_reg, args.inv_reg))
        TrainConfig(args.lr, args.dropout, args.epochs, args.seed, args.clip, args.select)
        _beam_config(args, args.lam)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    if arch.reconstruction and args.source_kind != "text":
        raise UsageError("reconstruction needs a text source")


def run_training(args, train_files, dev_files, outdir, test_files=None):
    two = args.arch != "single" and not args.reconstruction
    train_c = load_parallel(*_files_or(train_files), kind=args.source_kind, split="train")
    dev_c = load_parallel(*_files_or(dev_files), kind=args.source_kind, split="dev")
    vocabs = build_vocabs(train_c, args.reconstruction)
    dim = args.speech_dim if args.source_kind == "speech" else None
    tr = to_triples(train_c, vocabs, args.reconstruction, dim)
    dv = to_triples(dev_c, vocabs, args.reconstruction, dim)
    if two and any(t.y2 is None for t in tr):
        raise UsageError(f"{args.arch} needs second-target files")
    model = TiedModel(_model_config(args, vocabs), seed=args.seed)
    score = ScoreConfig(args.lam, args.trans_reg, args.inv_reg)
    cfg = TrainConfig(args.lr, args.dropout, args.epochs, args.seed, args.clip, args.select,
                      args.save_every, args.beam)
    result = train(model, tr, dv, score, cfg, outdir, vocabs.to_dict(),
                   dev_metric=_dev_metric(args, dv, vocabs))
    if args.plot:
        from .plotting import plot_training_curves
        plot_training_curves(result.history, os.path.join(outdir, "train_curve.png"))
    decoded = []
    if test_files:
        test_c = load_parallel(*_files_or(test_files), kind=args.source_kind, split="test")
        beam = _beam_config(args, args.lam)
        for u, t in zip(test_c, to_triples(test_c, vocabs, args.reconstruction, dim)):
            decoded.append(_decode_line(model, vocabs, u.uid, t.x, beam))
        with open(os.path.join(outdir, "test.tsv"), "w", encoding="utf-8") as f:
            f.writelines(line + "\n" for line in decoded)
    return model, vocabs, result, decoded


def _files_or(files):
    return files


def _decode_line(model, vocabs, uid, x, beam):
    h1, h2, score = decode_triple(model, x, beam)
    y1 = " ".join(vocabs.trg1.decode(h1.tokens))
    y2 = " ".join(vocabs.trg2.decode(h2.tokens)) if h2 is not None and vocabs.trg2 else ""
    return f"{uid}\t{y1}\t{y2}\t{score:.6f}"


# -- subcommands -----------------------------------------------------------

def cmd_train(args):
    _validate_train_args(args)
    outdir = _outdir(args)
    os.makedirs(outdir, exist_ok=True)
    dump_config(args, os.path.join(outdir, "run.cfg"))
    two = args.arch != "single" and not args.reconstruction
    if args.folds:
        folds = read_folds(args.folds)
        lines = []
        for fold, splits in folds.items():
            files = {k: (s.source, s.target1, s.target2 if two else None) for k, s in splits.items()}
            _, _, result, decoded = run_training(args, files["train"], files["dev"],
                                                 os.path.join(outdir, fold), files["test"])
            lines += decoded
            print(f"{fold}\tbest_epoch\t{result.best_epoch}\tbest_dev\t{result.best_dev:.6f}")
        with open(os.path.join(outdir, "test.tsv"), "w", encoding="utf-8") as f:
            f.writelines(line + "\n" for line in lines)
        return 0
    if not args.train or not args.dev:
        raise UsageError("train needs --train and --dev (or --folds)")
    test = _files(args.test, args, two) if args.test else None
    _, _, result, _ = run_training(args, _files(args.train, args, two), _files(args.dev, args, two),
                                   outdir, test)
    print(f"best_epoch\t{result.best_epoch}")
    print(f"best_dev\t{result.best_dev:.6f}")
    print(f"updates\t{result.updates}")
    return 0


def _load(ckpt):
    model, score, meta = load_checkpoint(ckpt)
    return model, score, Vocabs.from_dict(meta["vocabs"])


def _source(model, vocabs, line, base="."):
    if model.config.source == "speech":
        from .corpus import read_features
        path = line.strip()
        path = path if os.path.isabs(path) else os.path.join(base, path)
        return read_features(path, model.config.speech.input_dim)
    return vocabs.src.encode(line.split())


def cmd_decode(args):
    model, score, vocabs = _load(args.ckpt)
    beam = _beam_config(args, score.lam)
    base = os.path.dirname(os.path.abspath(args.src))
    with open(args.src, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    if args.dump_attn:
        os.makedirs(args.dump_attn, exist_ok=True)
    try:
        for k, line in enumerate(lines):
            uid = f"utt-{k:05d}"
            x = _source(model, vocabs, line, base)
            h1, h2, s = decode_triple(model, x, beam)
            y1 = " ".join(vocabs.trg1.decode(h1.tokens))
            y2 = " ".join(vocabs.trg2.decode(h2.tokens)) if h2 is not None else ""
            out.write(f"{uid}\t{y1}\t{y2}\t{s:.6f}\n")
            if args.dump_attn:
                write_attention(os.path.join(args.dump_attn, f"{uid}.A1.txt"), h1.attention(0))
                if h2 is not None:
                    names = {"multitask": ["A2"], "cascade": ["A12"], "triangle": ["A12", "A2"]}[model.kind]
                    for i, name in enumerate(names):
                        write_attention(os.path.join(args.dump_attn, f"{uid}.{name}.txt"), h2.attention(i))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _read_column(path, column):
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if column:
        lines = [ln.split("\t")[column - 1] if len(ln.split("\t")) >= column else "" for ln in lines]
    return [ln.split() for ln in lines]


def cmd_eval(args):
    rows = []
    if args.hyp or args.ref:
        if not (args.hyp and args.ref):
            raise UsageError("--hyp and --ref go together")
        hyps = _read_column(args.hyp, args.hyp_column)
        refs = _read_column(args.ref, None)
        if len(hyps) != len(refs):
            raise UsageError(f"{len(hyps)} hypotheses vs {len(refs)} references")
        for metric in args.metric or ["cer", "bleu"]:
            if metric == "cer":
                rows.append(("cer", corpus_cer(hyps, refs)))
            elif metric == "bleu":
                rows.append(("char_bleu", char_bleu(hyps, refs, keep_spaces=not args.no_space,
                                                    space=args.space_symbol)))
            elif metric == "wordbleu":
                rows.append(("word_bleu", word_bleu(hyps, refs, space=args.space_symbol)))
            else:
                rows.append(("seq_acc", sequence_accuracy(hyps, refs)))
    if args.segs or args.gold:
        if not (args.segs and args.gold):
            raise UsageError("--segs and --gold go together")
        hs, gs = read_segmentations(args.segs), read_segmentations(args.gold)
        tok, typ = word_discovery_prf(hs, gs)
        bnd = boundary_prf(hs, gs)
        rows += _prf_rows(tok, typ, bnd)
    if not rows:
        raise UsageError("nothing to evaluate: give --hyp/--ref and/or --segs/--gold")
    for name, value in rows:
        print(f"{name}\t{value:.2f}")
    return 0


def _prf_rows(tok, typ, bnd=None):
    rows = [("token_precision", tok.precision), ("token_recall", tok.recall), ("token_f", tok.f),
            ("type_precision", typ.precision), ("type_recall", typ.recall), ("type_f", typ.f)]
    if bnd is not None:
        rows += [("boundary_precision", bnd.precision), ("boundary_recall", bnd.recall),
                 ("boundary_f", bnd.f)]
    return rows


def read_segmentations(path):
    with open(path, encoding="utf-8") as f:
        return [Segmentation.parse(ln) for ln in f if ln.strip()]


def cmd_worddisc(args):
    if args.combine:
        args.arch, args.reconstruction = "cascade", True
    elif args.arch != "single" or args.reconstruction:
        raise UsageError("worddisc trains single-task models, or reconstruction with --combine")
    if args.smooth_attn:
        args.temperature = 10.0
    if args.direction == "reverse":
        args.src_ext, args.tgt1_ext = args.tgt1_ext, args.src_ext
    opts = DiscoveryOptions(args.direction, args.combine, not args.no_post_smooth,
                            args.extract_temperature, args.include_eos)
    if args.ckpt:
        model, _, vocabs = _load(args.ckpt)
        if not args.train:
            raise UsageError("worddisc needs --train PREFIX naming the corpus to segment")
    else:
        _validate_train_args(args)
        if not args.train:
            raise UsageError("worddisc needs --train PREFIX")
        outdir = _outdir(args)
        os.makedirs(outdir, exist_ok=True)
        dump_config(args, os.path.join(outdir, "run.cfg"))
        dev = args.dev or args.train
        model, vocabs, _, _ = run_training(args, _files(args.train, args, False),
                                           _files(dev, args, False), outdir)
    corpus = load_parallel(*_files(args.train, args, False), kind="text", split="disc")
    triples = to_triples(corpus, vocabs, model.config.arch.reconstruction)
    symbols = corpus.side("source") if args.direction == "base" else corpus.side("target1")
    segs = discover(model, triples, symbols, opts)
    text = "".join(s.format() + "\n" for s in segs)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    elif not args.gold:
        sys.stdout.write(text)
    if args.gold:
        gold = read_segmentations(args.gold)
        tok, typ = word_discovery_prf(segs, gold)
        for name, value in _prf_rows(tok, typ, boundary_prf(segs, gold)):
            print(f"{name}\t{value:.2f}")
        if args.plot:
            from .plotting import plot_prf
            outdir = _outdir(args)
            os.makedirs(outdir, exist_ok=True)
            label = args.direction + ("+combine" if args.combine else "")
            plot_prf([(label, tok, typ)], os.path.join(outdir, "worddisc_prf.png"))
    return 0


def _parse_spans(text):
    spans = []
    for part in text.split(";"):
        rows, cols = part.split(",")
        r0, r1 = (int(v) for v in rows.split(":"))
        c0, c1 = (int(v) for v in cols.split(":"))
        spans.append(((r0, r1), (c0, c1)))
    return spans


def cmd_inspect(args):
    model, score, vocabs = _load(args.ckpt)
    x = _source(model, vocabs, args.src)
    mats = {}
    if args.tgt1:
        y1 = vocabs.trg1.encode(args.tgt1.split())
        y2 = None
        if model.dec2 is not None:
            if model.config.arch.reconstruction:
                y2 = list(x)
            elif args.tgt2:
                y2 = vocabs.trg2.encode(args.tgt2.split())
            else:
                raise UsageError("--tgt2 is required to force a two-decoder model")
        with tn.no_tape():
            r = model.forward(SentenceTriple(x, y1, y2))
        for name in ("A1", "A2", "A12"):
            t = getattr(r, name)
            if t is not None:
                mats[name] = t.value
    else:
        h1, h2, _ = decode_triple(model, x, _beam_config(args, score.lam))
        mats["A1"] = h1.attention(0)
        if h2 is not None:
            names = {"multitask": ["A2"], "cascade": ["A12"], "triangle": ["A12", "A2"]}[model.kind]
            for i, name in enumerate(names):
                mats[name] = h2.attention(i)
    spans = _parse_spans(args.spans) if args.spans else None
    for name, A in mats.items():
        print(f"# {name}")
        sys.stdout.write(format_attention(A))
        if spans is not None:
            print(f"mass\t{name}\t{attention_mass_in_spans(A, spans):.4f}")
        if args.outdir:
            os.makedirs(args.outdir, exist_ok=True)
            write_attention(os.path.join(args.outdir, f"{name}.txt"), A)
    return 0


def cmd_synth(args):
    from .synthetic import SyntheticTask, write_corpus
    task = SyntheticTask(alphabet_size=args.alphabet, lexicon_size=args.lexicon,
                         max_len=args.max_len, seed=args.seed)
    n_train, n_dev, n_test = args.sizes
    write_corpus(args.outdir, task.splits(n_train, n_dev, n_test, seed=args.seed))
    print(f"wrote\t{args.outdir}")
    return 0


COMMANDS = {"train": cmd_train, "decode": cmd_decode, "eval": cmd_eval, "worddisc": cmd_worddisc,
            "inspect-attn": cmd_inspect, "synth": cmd_synth}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"tiedmt {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (TiedError, OSError) as e:
        print(f"tiedmt {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
