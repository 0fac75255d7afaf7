"""Learned canonical-pose dynamics model, losses, training and checkpoints."""
