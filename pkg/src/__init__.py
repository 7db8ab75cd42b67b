# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
# Envelopes - measurement-theoretic two-envelope laboratory
"""
Envelopes computes and Monte-Carlo-verifies the two-envelope and St. Petersburg
two-envelope problems over discretized state spaces, using pure and statistical
measurement, Fisher maximum likelihood and Bayes updating.
"""

__version__ = "1.0.0"
__author__ = "Envelopes"
