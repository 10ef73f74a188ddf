"""Agent interface and scripted baselines."""
