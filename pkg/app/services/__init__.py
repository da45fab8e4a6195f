"""
Verification services: model I/O, bound propagation, probability estimation and search.
"""
