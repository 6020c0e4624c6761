"""Command-line interface: simulate, fit, predict, pe, dette-demo."""
