"""Benchmarking and confidence estimation for guideline decision-graph predictors.

The package covers the full loop: parse a guideline decision graph, collect
k-rollout path predictions per patient from pluggable predictor backends,
build zero-label proxy benchmarks (synthetic cases and consistency
pseudo-labels), compare proxy scores against annotated scores, and train a
meta-classifier that flags individual predictions as likely correct or not.
"""

__version__ = "0.1.0"
