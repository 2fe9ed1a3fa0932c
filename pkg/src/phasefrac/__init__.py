"""Quasi-static phase-field brittle fracture on structured Q1 grids, random
crack datasets, and Dice-based evaluation of predicted phase fields."""

__version__ = "0.1.0"
