"""
The command-line pipeline on a toy corpus
=========================================

Writes a small corpus to a temporary directory and runs every command in
order, the same way ``prnmt <command> --config run.json`` would from a shell.
"""

import json
import tempfile
from pathlib import Path

from prnmt.cli import main
from prnmt.corpus import write_parallel_corpus
from prnmt.synthetic import noisy_lexicon_corpus

work = Path(tempfile.mkdtemp())
write_parallel_corpus(noisy_lexicon_corpus(200, 8, 0.1, 2, 5, seed=0), work / "train.src", work / "train.tgt")
write_parallel_corpus(noisy_lexicon_corpus(20, 8, 0.0, 2, 5, seed=1), work / "test.src", work / "test.ref")

config = {
    "train_src": str(work / "train.src"), "train_tgt": str(work / "train.tgt"),
    "test_src": str(work / "test.src"), "test_refs": [str(work / "test.ref")],
    "output_dir": str(work / "run"), "seed": 1,
    "embed_dim": 12, "hidden_dim": 16, "batch_size": 20, "mle_iters": 800,
    "lambda1": 1.0, "lambda2": 1.0, "pr_lr": 0.1, "gamma_lr": 0.5, "pr_iters": 100,
    "sample_size": 20, "sample_max_len": 10, "beam_size": 5, "decode_max_len": 10,
    "phrase_min_count": 5, "families": ["BD", "PT", "LR"],
}
(work / "run.json").write_text(json.dumps(config, indent=2))

for command in ("extract-resources", "train-mle", "train-pr", "decode", "rerank", "eval"):
    status = main([command, "--config", str(work / "run.json")])
    print(f"{command:18s} exit {status}")

# flags override config keys one to one
main(["eval", "--config", str(work / "run.json"), "--hypotheses", str(work / "run" / "decode.txt")])
print(sorted(p.name for p in (work / "run").iterdir()))
