"""Experiment orchestration: configs, training loops and analysis commands."""
