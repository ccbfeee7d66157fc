"""Self-reflective multi-agent code generation with pruning gates, a
sandboxed execute-and-repair loop, ranked final selection, and a benchmark
evaluation harness."""

from .agents import AgentConfig, ModelSettings
from .gateway import OpenAICompatBackend, ScriptedBackend, TranscriptEntry
from .model import (
    CodeSnippet,
    CotPrompt,
    ExecutionReport,
    GeneratedTestCase,
    RankedCodeSet,
    RepairAdvice,
    ScoreVector,
    SourceDataset,
    Task,
    Verdict,
)
from .orchestrator import RunConfig, TaskRunRecord, select_final, should_stop_repair, solve_task
from .sandbox import ProcessSandbox, SandboxConfig

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CodeSnippet",
    "CotPrompt",
    "ExecutionReport",
    "GeneratedTestCase",
    "ModelSettings",
    "OpenAICompatBackend",
    "ProcessSandbox",
    "RankedCodeSet",
    "RepairAdvice",
    "RunConfig",
    "SandboxConfig",
    "ScoreVector",
    "ScriptedBackend",
    "SourceDataset",
    "Task",
    "TaskRunRecord",
    "TranscriptEntry",
    "Verdict",
    "select_final",
    "should_stop_repair",
    "solve_task",
    "__version__",
]
