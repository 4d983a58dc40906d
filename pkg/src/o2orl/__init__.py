"""Offline-to-online TD3 with goal-aware state information on kinematic toy tasks."""

__version__ = "0.1.0"
