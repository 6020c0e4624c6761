"""Vine copula assembly (SP / P / NP modes)."""
