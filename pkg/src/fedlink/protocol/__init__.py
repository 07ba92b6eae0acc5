"""Three-party secure training protocol."""

from .audit import AuditReport, batch_match_cdf, low_match_batch_probability, scan_transcript
from .messages import Frame, MessageKind, Phase, ProtocolError
from .parties import (Coordinator, Endpoint, ProtocolConfig, ProviderA, ProviderB,
                      SessionAborted, SessionResult, run_session)
from .transport import InProcessRouter, TcpRouter, TranscriptRecorder

__all__ = [
    "AuditReport", "batch_match_cdf", "low_match_batch_probability", "scan_transcript",
    "Frame", "MessageKind", "Phase", "ProtocolError",
    "Coordinator", "Endpoint", "ProtocolConfig", "ProviderA", "ProviderB",
    "SessionAborted", "SessionResult", "run_session",
    "InProcessRouter", "TcpRouter", "TranscriptRecorder",
]
