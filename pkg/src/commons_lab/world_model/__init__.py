"""Recurrent world model and imagination-trained actor-critic."""
