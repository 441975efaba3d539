"""Procedural 3D shape-dataset synthesis and evolutionary dataset search.

Generate synthetic training sets of composed, transformed, truncated shape
primitives; search the space of generation policies for the one whose dataset
best trains a lightweight point-cloud reconstruction model to reconstruct a
target shape.
"""

__version__ = "0.1.0"
