"""Desk-scale offline-to-online RL laboratory.

Builds offline datasets from scripted behaviors, pretrains TD3-family
agents on them, classifies each setting into a Superior/Comparable/
Inferior regime by equivalence testing, fine-tunes with six method
configurations, and reports stability/plasticity decompositions plus the
regime-vs-outcome confusion matrix.
"""

__version__ = "0.1.0"
