"""
Long term dynamics of group repayment distributions under fair lending policies.
"""

__version__ = "0.1.0"
