"""Stationary waiting times in GI/GI/s queues with heavy-tailed service."""

__version__ = "0.1.0"
