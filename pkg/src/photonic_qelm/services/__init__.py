"""Acquisition, loss evaluation, optimization and experiment orchestration."""
