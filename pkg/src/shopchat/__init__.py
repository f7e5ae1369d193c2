"""Retail chat-assistant engine.

Routes user messages between a lightweight intent pipeline (forms and
pre-written responses) and an LLM tool-calling subsystem (product search,
cart edits, purchase completion), wrapped in deterministic guardrails, with
pluggable persistence and an evaluation harness for tool-selection and
security experiments.
"""

__version__ = "0.1.0"

from .config import AppConfig
from .gateway import ChatEngine, build_engine, create_app

__all__ = ["AppConfig", "ChatEngine", "build_engine", "create_app", "__version__"]
