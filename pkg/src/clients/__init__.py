"""Clients for remote query surfaces."""

from src.clients.completions import RemoteSession, remote_query

__all__ = ["RemoteSession", "remote_query"]
