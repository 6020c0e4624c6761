"""Core infrastructure package - config, logging, errors, parallel helpers."""
