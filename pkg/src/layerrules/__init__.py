"""Infer, prove and monitor layer rules of feed-forward ReLU networks."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .tensor_io import Dataset, as_tensor, npy_bytes, read_npy, read_npy_bytes, write_npy
from .network import (DenseLayer, LayerTap, Network, forward, forward_to_layer, load_model,
                      predict, save_model, truncate)
from .extraction import (ActivationMatrix, ExtractionConfig, PostCondition, binarize,
                         collect_activations, label_dataset, sample_weights)
from .tree import DecisionTree, deserialize_tree, fit_tree, serialize_tree
from .rules import (GT, LE, Metrics, Rule, RuleSet, deserialize_ruleset, evaluate_rule,
                    extract_rules, rule_matches, select_max_support, serialize_ruleset, top_rules)
from .lp import solve_lp
from .verifier import SAT, TIMEOUT, UNSAT, BoxRegion, Budget, LinearPredicate, beats, solve_query
from .prover import (AnchorPoint, ConstraintRow, OutputProperty, VerifyOutcome, compute_boxes,
                     minimize_explanation, parse_constraints_file, prove_pattern_implication,
                     prove_rule)
from .monitor import MonitorReport, monitor_classifiers, monitor_rules, verdict
