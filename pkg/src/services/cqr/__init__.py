"""Copula-based conditional quantile estimator and prediction-error criterion."""
