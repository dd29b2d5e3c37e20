"""Desk-scale quadruped parkour: deterministic simulation plus a two-phase
training pipeline (privileged RL, then depth distillation with heading
prediction)."""

__version__ = "0.1.0"
