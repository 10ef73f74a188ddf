"""Model-free baselines: clipped policy gradient and replay Q-learning."""
