"""Prompting, chat-completions transport and output parsing."""

from .client import BackendConfig, BatchResult, ChatClient, Failure, RetryPolicy, classify_batch
from .parsing import ParseOutcome, parse_output
from .prompts import PromptTemplate, get_template, render_prompt

__all__ = [
    "BackendConfig",
    "BatchResult",
    "ChatClient",
    "Failure",
    "ParseOutcome",
    "PromptTemplate",
    "RetryPolicy",
    "classify_batch",
    "get_template",
    "parse_output",
    "render_prompt",
]
