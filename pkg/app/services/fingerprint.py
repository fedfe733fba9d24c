import hashlib
from typing import Dict, Iterable

from app.infra.storage import StorageAdapter


class FingerprintService:
    """sha256 fingerprints of written artifacts; equal traces give equal digests."""

    @staticmethod
    def sha256_bytes(data: bytes) -> str:
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def sha256_text(cls, text: str) -> str:
        return cls.sha256_bytes(text.encode("utf-8"))

    @classmethod
    def for_keys(cls, storage: StorageAdapter, keys: Iterable[str]) -> Dict[str, str]:
        return {k: cls.sha256_bytes(storage.get_bytes(k)) for k in sorted(keys)}
