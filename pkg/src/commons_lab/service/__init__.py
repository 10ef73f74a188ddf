"""HTTP service exposing the experiment commands."""
