"""Strategic agents, action-recommendation explanations and their audits."""

__version__ = "0.1.0"
