# Sparse Functional Lagged Regression
__version__ = "1.0.0"
