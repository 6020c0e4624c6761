"""Bivariate copula building blocks: parametric families and the probit local-likelihood grid."""
