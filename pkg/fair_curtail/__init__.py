"""
FairCurtail - Axiomatic fair PV curtailment for low-voltage distribution feeders
"""

__version__ = "0.1.0"
__author__ = "FairCurtail Team"
