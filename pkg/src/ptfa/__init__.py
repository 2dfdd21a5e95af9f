"""Parallel-thinking facilitation for timed group discussions.

Six role agents (the thinking hats) watch a live text discussion and decide
every thirty seconds whether to intervene; a baseline mode posts three fixed
messages instead. The package ships the domain model, the facilitation
engine, a deterministic simulation harness, a WebSocket/REST service, durable
JSONL storage with export, and offline transcript metrics.
"""

__version__ = "0.1.0"
