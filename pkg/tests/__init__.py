# Tests package for the probabilistic verifier
