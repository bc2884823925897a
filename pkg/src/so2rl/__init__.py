"""Offline-to-online RL with perturbed value updates and high-frequency
critic training on an ensemble soft actor-critic, plus Q-value quality
diagnostics and built-in toy environments.
"""

__version__ = "0.1.0"
