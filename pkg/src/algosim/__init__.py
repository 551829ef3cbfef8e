"""Discrete-event simulator of an Algorand-style BA consensus network,
its gossip transport, and a flooding attack on message validation."""

__version__ = "0.1.0"
