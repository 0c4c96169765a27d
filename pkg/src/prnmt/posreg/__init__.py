from prnmt.posreg.objective import (
    ScoredSample,
    kl_approx,
    kl_gamma_gradient,
    kl_gradients,
    kl_theta_weights,
    p_tilde,
    q_tilde,
    score_samples,
)
from prnmt.posreg.training import (
    AdaDelta,
    MLEConfig,
    NumericalError,
    PRConfig,
    mean_sampled_kl,
    rng_stream,
    train_mle,
    train_posreg,
)

__all__ = [
    "q_tilde", "p_tilde", "kl_approx", "kl_gradients", "kl_gamma_gradient", "kl_theta_weights",
    "ScoredSample", "score_samples",
    "AdaDelta", "MLEConfig", "PRConfig", "NumericalError", "rng_stream",
    "train_mle", "train_posreg", "mean_sampled_kl",
]
