"""Common-pool resource appropriation lab: gridworld, learners and analyses."""

__version__ = "0.1.0"
