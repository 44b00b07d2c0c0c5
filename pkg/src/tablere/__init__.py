"""Relation extraction over table records with CNN/LSTM classifiers."""
__version__ = "0.1.0"
