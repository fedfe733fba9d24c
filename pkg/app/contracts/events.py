from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Literal, Optional
from uuid import uuid4

from pydantic import BaseModel, Field

MessageKind = Literal["primal", "dual"]


@dataclass(frozen=True, slots=True)
class Message:
    """One agent-to-agent transmission inside the simulated network.

    For dual messages `edge` names the dual being carried, (p, q) with p < q.
    """

    sender: int
    receiver: int
    kind: MessageKind
    value: float
    iteration: int
    edge: Optional[tuple] = None


EventType = Literal[
    "RUN.STARTED",
    "RUN.COMPLETED",
    "RUN.FAILED",
    "CERTIFICATE.EVALUATED",
    "ARTIFACT.WRITTEN",
]


class RunEvent(BaseModel):
    event_id: str = Field(default_factory=lambda: str(uuid4()))
    event_type: EventType
    at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    run_id: str
    algorithm: Optional[str] = None
    payload: Dict[str, Any] = Field(default_factory=dict)
    prev_event_hash: Optional[str] = None
    event_hash: Optional[str] = None
