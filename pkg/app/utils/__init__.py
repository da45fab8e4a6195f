"""
Utility modules for the probabilistic verifier.
"""
