from __future__ import annotations

import hashlib
import json
from typing import Any, Dict, Iterable, Optional

from app.contracts.events import EventType, RunEvent
from app.infra.storage import LocalStorage

AUDIT_KEY = "audit.jsonl"


def _stable_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"), default=str)


def _sha256(s: str) -> str:
    return hashlib.sha256(s.encode("utf-8")).hexdigest()


def _hash_body(ev: RunEvent) -> Dict[str, Any]:
    body = ev.model_dump(mode="json")
    body.pop("event_hash", None)
    return body


class RunAuditLog:
    """Append-only, hash-chained run log in <out-dir>/audit.jsonl.

    The chain continues across commands writing into the same directory.
    """

    def __init__(self, storage: LocalStorage, key: str = AUDIT_KEY) -> None:
        self.storage = storage
        self.key = key
        self._last_hash: Optional[str] = self._tail_hash()

    def _tail_hash(self) -> Optional[str]:
        if not self.storage.exists(self.key):
            return None
        lines = [ln for ln in self.storage.get_text(self.key).splitlines() if ln.strip()]
        return json.loads(lines[-1]).get("event_hash") if lines else None

    def write(
        self,
        event_type: EventType,
        *,
        run_id: str,
        algorithm: Optional[str] = None,
        payload: Optional[Dict[str, Any]] = None,
    ) -> RunEvent:
        ev = RunEvent(
            event_type=event_type,
            run_id=run_id,
            algorithm=algorithm,
            payload=dict(payload or {}),
            prev_event_hash=self._last_hash,
        )
        ev.event_hash = _sha256(_stable_json(_hash_body(ev)))
        self.storage.append_text(self.key, ev.model_dump_json() + "\n")
        self._last_hash = ev.event_hash
        return ev


def verify_chain(lines: Iterable[str]) -> bool:
    """True when every event hashes to its recorded value and links to its predecessor."""
    prev: Optional[str] = None
    for line in lines:
        if not line.strip():
            continue
        ev = RunEvent.model_validate_json(line)
        if ev.prev_event_hash != prev:
            return False
        if ev.event_hash != _sha256(_stable_json(_hash_body(ev))):
            return False
        prev = ev.event_hash
    return True
