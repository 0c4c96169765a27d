"""Command-line driver: resource extraction, training, decoding, reranking and scoring.

Every command reads one flat JSON config (``--config``); each config key can
also be set with the flag of the same name (``--lambda2 0``), and flags win.
A copy of the effective config is written next to each command's outputs as
``<command>.config.json``; passing it back with ``--config`` replays the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from prnmt.bleu import bleu_files
from prnmt.corpus import Vocabulary, build_vocab, encode_corpus, load_parallel_corpus
from prnmt.decode import CandidateScore, decode_with_cp, format_kbest_line, parse_kbest_line, rerank
from prnmt.features import (
    FAMILIES,
    FeatureConfig,
    KnowledgeResources,
    ResourceThresholds,
    extract_resources,
    load_dictionary,
    load_phrase_table,
    load_weights,
    save_weights,
)
from prnmt.model import (
    ModelConfig,
    beam_search,
    forward_logprob,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from prnmt.model.search import Hypothesis
from prnmt.posreg import MLEConfig, NumericalError, PRConfig, rng_stream, train_mle, train_posreg

logger = logging.getLogger("prnmt")

COMMANDS = ("extract-resources", "train-mle", "train-pr", "decode", "rerank", "eval")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # data
    train_src: str = ""
    train_tgt: str = ""
    test_src: str = ""
    test_refs: list = field(default_factory=list)
    max_len: int = 50
    vocab_size: int = 30000
    output_dir: str = "out"
    seed: int | None = None
    # model
    embed_dim: int = 32
    hidden_dim: int = 64
    # resources
    dictionary: str = ""
    phrase_table: str = ""
    dict_min_prob: float = 0.1
    phrase_min_prob: float = 0.5
    phrase_min_count: int = 10
    max_phrase_len: int = 4
    # features
    families: list = field(default_factory=lambda: list(FAMILIES))
    beta: float = 1.236
    cp_epsilon: float = 1e-6
    # optimizer shared by both trainers
    rho: float = 0.95
    eps: float = 1e-6
    # MLE
    init_checkpoint: str = ""
    batch_size: int = 80
    mle_iters: int = 1000
    mle_lr: float = 1.0
    # PR
    mle_checkpoint: str = ""
    init_gamma: str = ""
    lambda1: float = 8e-5
    lambda2: float = 2.5e-4
    alpha: float = 0.2
    sample_size: int = 80
    sample_max_len: int = 50
    pr_batch_size: int = 1
    pr_lr: float = 1.0
    gamma_lr: float = 1e-2
    pr_iters: int = 1000
    trace_interval: int = 100
    include_reference_in_samples: bool = False
    # decoding
    checkpoint: str = ""
    gamma: str = ""
    beam_size: int = 10
    decode_max_len: int = 50
    cp_weight: float = 0.0
    cp_during_search: bool = False
    # eval
    hypotheses: str = ""

    # --- derived paths ---
    def out(self, name: str) -> Path:
        return Path(self.output_dir) / name

    def resolved(self, key: str, default_name: str) -> Path:
        value = getattr(self, key)
        return Path(value) if value else self.out(default_name)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(beta=self.beta, cp_epsilon=self.cp_epsilon, families=tuple(self.families))

    def thresholds(self) -> ResourceThresholds:
        return ResourceThresholds(self.dict_min_prob, self.phrase_min_prob, self.phrase_min_count,
                                  self.max_phrase_len)

    def mle_config(self) -> MLEConfig:
        return MLEConfig(batch_size=self.batch_size, max_iters=self.mle_iters, rho=self.rho, eps=self.eps,
                         lr=self.mle_lr, seed=self.seed)

    def pr_config(self) -> PRConfig:
        return PRConfig(lambda1=self.lambda1, lambda2=self.lambda2, alpha=self.alpha,
                        sample_size=self.sample_size, sample_max_len=self.sample_max_len,
                        pr_batch_size=self.pr_batch_size, rho=self.rho, eps=self.eps, lr=self.pr_lr,
                        gamma_lr=self.gamma_lr, max_iters=self.pr_iters, trace_interval=self.trace_interval,
                        seed=self.seed, include_reference_in_samples=self.include_reference_in_samples)


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return data


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors; exit status 2 is reserved for numerical aborts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prnmt", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for name, f in FIELDS.items():
        flag = "--" + name.replace("_", "-")
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if isinstance(default, list):
            parser.add_argument(flag, dest=name, nargs="*", default=argparse.SUPPRESS)
        elif isinstance(default, bool):
            parser.add_argument(flag, dest=name, type=_parse_bool, default=argparse.SUPPRESS)
        elif name == "seed" or isinstance(default, int):
            parser.add_argument(flag, dest=name, type=int, default=argparse.SUPPRESS)
        elif isinstance(default, float):
            parser.add_argument(flag, dest=name, type=float, default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, dest=name, default=argparse.SUPPRESS)
    return parser


def make_config(file_values: dict, overrides: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig(**{**file_values, **overrides})
    except TypeError as e:
        raise ConfigError(str(e)) from None
    if cfg.seed is None:
        raise ConfigError("a seed is required (--seed or \"seed\" in the config)")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    bad = [f for f in cfg.families if f not in FAMILIES]
    if bad:
        raise ConfigError(f"unknown feature families {bad}; choose from {list(FAMILIES)}")
    return cfg


# --- validation ---------------------------------------------------------------

def _require(cfg: ExperimentConfig, *keys):
    for key in keys:
        if not getattr(cfg, key):
            raise ConfigError(f"config key {key!r} is required for this command")


def _exists(*paths):
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"file not found: {p}")


def validate(command: str, cfg: ExperimentConfig) -> None:
    """Check inputs for ``command`` before any computation starts."""
    if command in ("extract-resources", "train-mle", "train-pr"):
        _require(cfg, "train_src", "train_tgt")
        _exists(cfg.train_src, cfg.train_tgt)
    if command == "train-mle":
        if cfg.init_checkpoint:
            _exists(cfg.init_checkpoint)
    if command == "train-pr":
        _exists(cfg.resolved("mle_checkpoint", "mle.ckpt"))
        for key in ("dictionary", "phrase_table", "init_gamma"):
            if getattr(cfg, key):
                _exists(getattr(cfg, key))
    if command in ("decode", "rerank"):
        _require(cfg, "test_src")
        _exists(cfg.test_src, cfg.resolved("checkpoint", "pr.ckpt"))
    if command in ("train-pr", "decode", "rerank"):
        _exists(cfg.out("source.vocab"), cfg.out("target.vocab"))
    if command == "rerank":
        _exists(cfg.out("kbest.txt"), cfg.resolved("gamma", "gamma.txt"))
    if command == "eval":
        _require(cfg, "test_refs")
        _exists(cfg.resolved("hypotheses", "rerank.txt"), *cfg.test_refs)
    try:
        cfg.mle_config()
        cfg.pr_config()
        ModelConfig(10, 10, cfg.embed_dim, cfg.hidden_dim)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if cfg.beam_size < 1 or cfg.cp_weight < 0 or cfg.max_len < 1 or cfg.decode_max_len < 1:
        raise ConfigError("beam_size, max_len and decode_max_len must be >= 1 and cp_weight >= 0")


# --- shared helpers --------------------------------------------------------------

def _training_pairs(cfg):
    return load_parallel_corpus(cfg.train_src, cfg.train_tgt, cfg.max_len)


def _vocabs(cfg, raw=None):
    """Vocabularies stored in the output directory, built from the training data on first use."""
    sp, tp = cfg.out("source.vocab"), cfg.out("target.vocab")
    if sp.is_file() and tp.is_file():
        return Vocabulary.load(sp), Vocabulary.load(tp)
    raw = _training_pairs(cfg) if raw is None else raw
    sv, tv = build_vocab(raw, "source", cfg.vocab_size), build_vocab(raw, "target", cfg.vocab_size)
    sv.save(sp)
    tv.save(tp)
    return sv, tv


def _resources(cfg, sv, tv) -> KnowledgeResources:
    dict_path = cfg.resolved("dictionary", "dictionary.tsv")
    pt_path = cfg.resolved("phrase_table", "phrases.tsv")
    res = KnowledgeResources()
    if dict_path.is_file():
        res.dictionary = load_dictionary(dict_path, sv, tv, cfg.dict_min_prob)
    if pt_path.is_file():
        res.phrase_table = load_phrase_table(pt_path, sv, tv, cfg.phrase_min_prob, cfg.phrase_min_count)
    return res


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


def _write_trace(path, trace):
    _write_lines(path, [json.dumps(r, sort_keys=True) for r in trace])


def _read_sources(cfg, sv):
    with open(cfg.test_src, encoding="utf-8") as f:
        return [sv.encode(line.split()) for line in f.read().splitlines()]


# --- commands ---------------------------------------------------------------------

def cmd_extract_resources(cfg):
    raw = _training_pairs(cfg)
    sv, tv = _vocabs(cfg, raw)
    d, pt = extract_resources(raw, sv, tv, cfg.thresholds())
    d.save(cfg.out("dictionary.tsv"))
    pt.save(cfg.out("phrases.tsv"))
    logger.info("extracted %d dictionary entries, %d phrase pairs", len(d), len(pt))


def cmd_train_mle(cfg):
    raw = _training_pairs(cfg)
    sv, tv = _vocabs(cfg, raw)
    corpus = encode_corpus(raw, sv, tv)
    if cfg.init_checkpoint:
        params = load_checkpoint(cfg.init_checkpoint)
    else:
        seed = int(rng_stream(cfg.seed, "init").integers(2**31))
        params = init_params(ModelConfig(len(sv), len(tv), cfg.embed_dim, cfg.hidden_dim), seed)
    params, trace = train_mle(cfg.mle_config(), corpus, params, log_every=100)
    save_checkpoint(params, cfg.out("mle.ckpt"))
    _write_trace(cfg.out("mle_trace.jsonl"), trace)


def cmd_train_pr(cfg):
    sv, tv = _vocabs(cfg)
    corpus = encode_corpus(_training_pairs(cfg), sv, tv)
    params = load_checkpoint(cfg.resolved("mle_checkpoint", "mle.ckpt"))
    gamma = load_weights(cfg.init_gamma) if cfg.init_gamma else {}
    resources = _resources(cfg, sv, tv)
    with open(cfg.out("pr_trace.jsonl"), "w", encoding="utf-8") as trace_file:
        params, gamma, _ = train_posreg(cfg.pr_config(), corpus, resources, params, gamma,
                                        cfg.feature_config(), trace_file=trace_file)
    save_checkpoint(params, cfg.out("pr.ckpt"))
    save_weights(gamma, cfg.out("gamma.txt"))


def cmd_decode(cfg):
    sv, tv = _vocabs(cfg)
    params = load_checkpoint(cfg.resolved("checkpoint", "pr.ckpt"))
    best, kbest_lines = [], []
    for i, x in enumerate(_read_sources(cfg, sv)):
        kbest = beam_search(params, x, cfg.beam_size, cfg.decode_max_len)
        if cfg.cp_weight > 0:
            top = decode_with_cp(params, x, cfg.beam_size, cfg.cp_weight, cfg.decode_max_len,
                                 cfg.cp_epsilon, cfg.cp_during_search)
        else:
            top = kbest[0]
        best.append(" ".join(tv.decode(top.tokens)))
        for h in kbest:
            kbest_lines.append(format_kbest_line(i, " ".join(tv.decode(h.tokens, strip_eos=False)),
                                                 CandidateScore(h, h.logp, 0.0)))
    _write_lines(cfg.out("decode.txt"), best)
    _write_lines(cfg.out("kbest.txt"), kbest_lines)


def cmd_rerank(cfg):
    """Rescore the k-best dump with gamma; attention is recovered by forced decoding."""
    sv, tv = _vocabs(cfg)
    params = load_checkpoint(cfg.resolved("checkpoint", "pr.ckpt"))
    gamma = load_weights(cfg.resolved("gamma", "gamma.txt"))
    resources = _resources(cfg, sv, tv)
    sources = _read_sources(cfg, sv)
    groups: dict[int, list] = {}
    with open(cfg.out("kbest.txt"), encoding="utf-8") as f:
        for line in f:
            idx, tokens, _, _, _ = parse_kbest_line(line)
            groups.setdefault(idx, []).append(tv.encode(tokens.split()))
    if sorted(groups) != list(range(len(sources))):
        raise ConfigError("k-best file does not match the test source file")
    chosen, lines = [], []
    for i, x in enumerate(sources):
        hyps = []
        for y in groups[i]:
            lp, att = forward_logprob(params, x, y, append_eos=False)
            hyps.append(Hypothesis(tuple(y), lp, att))
        result = rerank(hyps, x, gamma, resources, cfg.feature_config())
        chosen.append(" ".join(tv.decode(result.chosen.tokens)))
        lines += [format_kbest_line(i, " ".join(tv.decode(c.hypothesis.tokens, strip_eos=False)), c)
                  for c in result.candidates]
    _write_lines(cfg.out("rerank.txt"), chosen)
    _write_lines(cfg.out("kbest_reranked.txt"), lines)


def cmd_eval(cfg):
    report = bleu_files(cfg.resolved("hypotheses", "rerank.txt"), cfg.test_refs)
    print(report)
    _write_lines(cfg.out("bleu.txt"), [str(report)])


HANDLERS = {
    "extract-resources": cmd_extract_resources,
    "train-mle": cmd_train_mle,
    "train-pr": cmd_train_pr,
    "decode": cmd_decode,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
}


def snapshot(command: str, cfg: ExperimentConfig) -> Path:
    path = cfg.out(f"{command}.config.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataclasses.asdict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def run(command: str, cfg: ExperimentConfig) -> int:
    try:
        validate(command, cfg)
    except ConfigError as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_INVALID
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    snapshot(command, cfg)
    try:
        HANDLERS[command](cfg)
    except NumericalError as e:
        logger.error("numerical abort: %s", e)
        return EXIT_NUMERICAL
    except (ConfigError, OSError, ValueError) as e:
        logger.error("%s failed: %s", command, e)
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command, config_path, verbose = args.pop("command"), args.pop("config"), args.pop("verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = make_config(load_config(config_path) if config_path else {}, args)
    except ConfigError as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_INVALID
    return run(command, cfg)


if __name__ == "__main__":
    sys.exit(main())
