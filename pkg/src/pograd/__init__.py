"""pograd: Bayesian partial orders from observed rankings.

Latent-embedding model of a strict partial order, an exact frontier
likelihood over linear extensions, a differentiable relaxation of both the
order and the likelihood, posterior samplers (blocked MH on the exact
model, HMC and full-rank VI on the relaxation), decoding and evaluation
utilities, a synthetic-data generator with coverage control, and two
non-Bayesian baselines.
"""

from .baselines import (SoftDagConfig, majority_fit, notears_penalty,
                        softdag_fit, softdag_loss_and_grad,
                        softdag_reachability)
from .dataio import (DataError, Dataset, load_dataset, save_dataset)
from .decode_eval import (ClosureProbabilities, MetricsReport,
                          closure_probabilities, closure_prf, decode_closure,
                          ip_cov, mae_to_reference, step_nll, trace_nll, waic)
from .hardlik import (Embedding, Trace, dataset_hard_loglik, hard_margin,
                      hard_precedes, hard_step_prob, hard_trace_loglik,
                      induced_order, margin_matrix)
from .model import (ModelParams, NumericalError, PriorConfig, hard_log_posterior,
                    prior_cholesky, relaxed_log_posterior, to_embedding,
                    transform, inverse_transform)
from .poset import (PartialOrder, WeightedDigraph, break_cycles_and_close,
                    enumerate_linear_extensions, is_linear_extension, max_set,
                    transitive_closure, transitive_reduction)
from .relaxlik import (RelaxConfig, SoftPrecedence, compute_kappa,
                       compute_separation_margin, matrix_dataset_loglik,
                       relaxed_step_prob, relaxed_trace_grad,
                       relaxed_trace_loglik, soft_margin, soft_min,
                       soft_precedence_matrix)
from .samplers import (AdviConfig, DrawSet, HmcConfig, advi_fit,
                       hard_mh_sample, hmc_sample)
from .synth import (SynthConfig, generate_ground_truth, make_dataset,
                    sample_trace, select_training_traces)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
