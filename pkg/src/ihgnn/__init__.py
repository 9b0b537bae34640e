"""Implicit hypergraph neural networks on numpy/scipy.

Equilibrium inference ``Z = phi(M Z W + X Theta1 + 1 b^T)``, adjoint gradients,
l_inf-projected training and numerical checks of the model's guarantees.
"""
from .autograd import GradientBundle, implicit_gradients, solve_adjoint
from .data import (CitationDataset, SplitSpec, citations_to_hypergraph, load_citation_dataset,
                   make_splits, synthetic_citations)
from .equilibrium import (Activation, ContractionError, EquilibriumSolution, SolverError,
                          solve_forward, unroll_explicit)
from .hypergraph import (Hypergraph, InadmissibleHypergraphError, PropagationOperator,
                         add_self_loops, build_operator, validate_admissible)
from .model import (ModelParams, Prediction, SolverConfig, forward, init_params,
                    load_checkpoint, project_inf_ball, save_checkpoint)
from .theory import (BoundInputs, PolynomialFilter, expressivity_construct,
                     generalization_bound, oversmoothing_profile, row_dispersion)
from .train import TrainConfig, evaluate, repeat_runs, train

__version__ = "0.1.0"

__all__ = [
    "Activation", "BoundInputs", "CitationDataset", "ContractionError", "EquilibriumSolution",
    "GradientBundle", "Hypergraph", "InadmissibleHypergraphError", "ModelParams",
    "PolynomialFilter", "Prediction", "PropagationOperator", "SolverConfig", "SolverError",
    "SplitSpec", "TrainConfig", "add_self_loops", "build_operator", "citations_to_hypergraph",
    "evaluate", "expressivity_construct", "forward", "generalization_bound",
    "implicit_gradients", "init_params", "load_checkpoint", "load_citation_dataset",
    "make_splits", "oversmoothing_profile", "project_inf_ball", "repeat_runs",
    "row_dispersion", "save_checkpoint", "solve_adjoint", "solve_forward", "synthetic_citations",
    "train", "unroll_explicit", "validate_admissible",
]
