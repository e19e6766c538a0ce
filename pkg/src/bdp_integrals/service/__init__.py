"""
HTTP service exposing the bdp_integrals computations.
"""
