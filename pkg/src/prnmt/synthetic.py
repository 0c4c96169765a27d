"""Toy translation tasks with known ground truth."""

from __future__ import annotations

import numpy as np

from prnmt.corpus import Vocabulary, build_vocab
from prnmt.features import DictEntry, Dictionary


def lexicon(size: int = 50):
    """Deterministic one-to-one word list: ``s<k>`` translates to ``t<k>``."""
    return [(f"s{k}", f"t{k}") for k in range(size)]


def noisy_lexicon_corpus(n_pairs: int, size: int = 50, noise: float = 0.2, min_len: int = 3,
                         max_len: int = 8, rng=None, seed=None):
    """Word-by-word translations of random source sentences.

    Each target word is independently replaced, with probability ``noise``, by
    a different target word drawn uniformly.  Returns raw token pairs.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        src = rng.integers(0, size, n)
        tgt = src.copy()
        flip = rng.random(n) < noise
        offsets = rng.integers(1, size, n)
        tgt[flip] = (tgt[flip] + offsets[flip]) % size
        pairs.append(([f"s{k}" for k in src], [f"t{k}" for k in tgt]))
    return pairs


def lexicon_vocabs(size: int = 50):
    """Vocabularies covering every lexicon word, in index order."""
    words = lexicon(size)
    fake = [([s for s, _ in words], [t for _, t in words])]
    return build_vocab(fake, "source", size + 5), build_vocab(fake, "target", size + 5)


def lexicon_dictionary(src_vocab: Vocabulary, tgt_vocab: Vocabulary, size: int = 50) -> Dictionary:
    return Dictionary([DictEntry(s, t, src_vocab.token_to_id[s], tgt_vocab.token_to_id[t], 1.0, 1.0)
                       for s, t in lexicon(size)])


def copy_corpus(n_pairs: int, n_words: int = 8, min_len: int = 2, max_len: int = 5, rng=None, seed=None):
    """Random sentences paired with themselves."""
    rng = np.random.default_rng(seed) if rng is None else rng
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        sent = [f"w{k}" for k in rng.integers(0, n_words, n)]
        pairs.append((sent, list(sent)))
    return pairs
