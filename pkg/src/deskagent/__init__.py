"""Desk-scale collaborative tabletop agent.

A 2D tabletop world, a clarification-dialogue sequence model with signal
tokens, a FiLM connection module feeding a diffusion action expert, a
training-free router, two-stage insulated training, and an evaluation
suite with delimited reports and rendered figures.
"""

__version__ = "0.1.0"
