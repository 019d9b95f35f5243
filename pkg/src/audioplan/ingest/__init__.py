from .build import build_database
from .formats import (
    IngestError,
    ManifestEntry,
    SourceSegment,
    load_database,
    load_manifest,
    parse_rttm,
    save_database,
    write_manifest,
)
from .synth import TaskInstance, generate_benchmark, read_instances, synthesize_recording, write_instances

__all__ = [
    "IngestError",
    "ManifestEntry",
    "SourceSegment",
    "TaskInstance",
    "build_database",
    "generate_benchmark",
    "load_database",
    "load_manifest",
    "parse_rttm",
    "read_instances",
    "save_database",
    "synthesize_recording",
    "write_instances",
    "write_manifest",
]
