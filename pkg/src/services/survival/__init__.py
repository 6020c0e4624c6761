"""Censoring distribution estimators and inverse-probability weights."""
