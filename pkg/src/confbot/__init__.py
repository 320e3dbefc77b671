"""Conversational conference assistant.

Deterministic NLU, rule/form dialogue management, three skills (core
chit-chat, point-of-interest recommendation, conference programme), a
multi-channel gateway with two-device conversation sync, consent-gated
personalization, and append-only conversation analytics.
"""

__version__ = "0.1.0"
