"""Model access: prompt library, backends and the structured-output gateway."""

from .backends import BackendReply, ChatRequest, HttpBackend, RecordBackend, ReplayBackend, ScriptedBackend
from .gateway import Completion, CompletionRecord, Gateway, GatewayEmbedder, load_prices
from .templates import PromptLibrary, PromptTemplate, prompt_hash

__all__ = [
    "BackendReply", "ChatRequest", "Completion", "CompletionRecord", "Gateway", "GatewayEmbedder",
    "HttpBackend", "PromptLibrary", "PromptTemplate", "RecordBackend", "ReplayBackend",
    "ScriptedBackend", "load_prices", "prompt_hash",
]
