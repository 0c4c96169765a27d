from prnmt.model.network import forward_logprob, grad_logprob, score, weighted_grad
from prnmt.model.params import (
    ModelConfig,
    ModelParams,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from prnmt.model.search import (
    Hypothesis,
    SampleSet,
    beam_search,
    draw_samples,
    greedy_decode,
    sample_translations,
)

__all__ = [
    "ModelConfig", "ModelParams", "init_params", "save_checkpoint", "load_checkpoint",
    "forward_logprob", "grad_logprob", "score", "weighted_grad",
    "Hypothesis", "SampleSet", "draw_samples", "sample_translations", "greedy_decode", "beam_search",
]
