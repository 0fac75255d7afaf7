"""Heightfield sculpting: simulated materials, learned push dynamics and MPC planning."""

from .field import HeightField, flat_field
from .actions import ActionBounds, PushAction, PinchAction

__version__ = "0.1.0"
__all__ = ["HeightField", "flat_field", "ActionBounds", "PushAction", "PinchAction"]
