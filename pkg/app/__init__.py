"""
Probabilistic branch-and-bound verifier for ReLU networks under Gaussian input.
"""
