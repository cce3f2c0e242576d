"""Risk-weighted Bayesian partially synthetic data.

Record-level identification risk is turned into likelihood weights, a
weighted pseudo posterior is sampled by MCMC and ``L`` partially synthetic
datasets are drawn from it, then scored for risk and utility.
"""
from .data_model import BallConfig, Column, Dataset, Schema, build_pattern_index, load_dataset
from .risk import (
    RiskVector,
    marginal_risk_confidential,
    marginal_risk_synthetic,
    pairwise_risk_confidential,
    risk_summary,
)
from .weights import WeightVector, adjust_weights, marginal_weights, pairwise_weights, unit_weights

__all__ = [
    "BallConfig", "Column", "Dataset", "RiskVector", "Schema", "WeightVector", "adjust_weights",
    "build_pattern_index", "load_dataset", "marginal_risk_confidential", "marginal_risk_synthetic",
    "marginal_weights", "pairwise_risk_confidential", "pairwise_weights", "risk_summary", "unit_weights",
]
