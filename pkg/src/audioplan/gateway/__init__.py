from .base import (
    DbMetadata,
    GatewayError,
    GeneratorUnavailable,
    PlanInvalidAfterRetries,
    PlannerUnavailable,
    QueryRequest,
)
from .pipeline import STAGES, PipelineRun, StageError, Trace, run_pipeline
from .remote import ChatClient, RemoteConfig, RemoteLLMGenerator, RemoteLLMPlanner
from .rules import ExtractiveGenerator, RuleTemplatePlanner

__all__ = [
    "ChatClient",
    "DbMetadata",
    "ExtractiveGenerator",
    "GatewayError",
    "GeneratorUnavailable",
    "PipelineRun",
    "PlanInvalidAfterRetries",
    "PlannerUnavailable",
    "QueryRequest",
    "RemoteConfig",
    "RemoteLLMGenerator",
    "RemoteLLMPlanner",
    "RuleTemplatePlanner",
    "STAGES",
    "StageError",
    "Trace",
    "run_pipeline",
]
