"""Martingale decompositions of time averages of Markov processes."""
