"""
Numerical core: models, continued fractions, Laplace inversion, passage and reward laws.
"""
