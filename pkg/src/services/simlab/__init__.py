"""Simulation laboratory: data generators, truth oracles, metrics and the replication engine."""
