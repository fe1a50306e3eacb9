"""Dyadic mollification, two-scale windows and weighted function space classification."""
