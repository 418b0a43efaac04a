"""Backdoor poisoning detection and mitigation on last-layer representations."""

__version__ = "0.1.0"
