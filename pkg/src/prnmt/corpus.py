"""Parallel corpus loading, vocabularies and id encoding."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")

DEFAULT_MAX_VOCAB = 30000
DEFAULT_MAX_LEN = 50


@dataclass
class Vocabulary:
    """Bijective token <-> id map with reserved ids for the special symbols."""

    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.id_to_token[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens %r" % (SPECIALS,))
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return encode_tokens(self, tokens)

    def decode(self, ids: Iterable[int], strip_eos: bool = True) -> list[str]:
        ids = list(ids)
        if strip_eos and ids and ids[-1] == EOS:
            ids = ids[:-1]
        return [self.id_to_token[i] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self.id_to_token):
                f.write(f"{i}\t{tok}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, _, tok = line.partition("\t")
                if not tok or int(idx) != len(tokens):
                    raise ValueError(f"{path}:{lineno}: expected '{len(tokens)}<TAB>token'")
                tokens.append(tok)
        return cls(tokens)


@dataclass(frozen=True)
class SentencePair:
    source: tuple[int, ...]
    target: tuple[int, ...]


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def load_parallel_corpus(src_path, tgt_path, max_len: int = DEFAULT_MAX_LEN):
    """Read two aligned, whitespace-tokenized files into token-list pairs.

    Pairs with an empty side or a side longer than ``max_len`` are dropped;
    the number dropped is logged.
    """
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise ValueError(
            f"line count mismatch: {src_path} has {len(src_lines)}, {tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    dropped = 0
    for s, t in zip(src_lines, tgt_lines):
        src, tgt = s.split(), t.split()
        if not src or not tgt or len(src) > max_len or len(tgt) > max_len:
            dropped += 1
            continue
        pairs.append((src, tgt))
    if dropped:
        logger.info("dropped %d of %d sentence pairs (empty or longer than %d)",
                    dropped, len(src_lines), max_len)
    return pairs


def build_vocab(pairs: Sequence, side: str, max_size: int = DEFAULT_MAX_VOCAB) -> Vocabulary:
    """Most-frequent-first vocabulary for one side of the corpus.

    Frequency ties keep first-occurrence order.
    """
    if max_size < len(SPECIALS) + 1:
        raise ValueError(f"max_size must be at least {len(SPECIALS) + 1}, got {max_size}")
    if not pairs:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    col = {"source": 0, "target": 1}[side]
    counts: Counter = Counter()
    for pair in pairs:
        counts.update(pair[col])
    for tok in SPECIALS:
        counts.pop(tok, None)
    # Counter preserves insertion order, and sorted() is stable
    ranked = sorted(counts, key=lambda tok: -counts[tok])
    keep = ranked[: max_size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + keep)


def encode_tokens(vocab: Vocabulary, tokens: Iterable[str]) -> list[int]:
    get = vocab.token_to_id.get
    return [get(tok, UNK) for tok in tokens]


def encode_corpus(pairs, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> list[SentencePair]:
    return [SentencePair(tuple(encode_tokens(src_vocab, s)), tuple(encode_tokens(tgt_vocab, t)))
            for s, t in pairs]


def write_parallel_corpus(pairs, src_path, tgt_path) -> None:
    with open(src_path, "w", encoding="utf-8") as fs, open(tgt_path, "w", encoding="utf-8") as ft:
        for s, t in pairs:
            fs.write(" ".join(s) + "\n")
            ft.write(" ".join(t) + "\n")
