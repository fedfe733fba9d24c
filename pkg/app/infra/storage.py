from __future__ import annotations

import os
from abc import ABC, abstractmethod

from app.errors import ArtifactIoError


def parse_storage_uri(uri: str) -> tuple[str, str]:
    """Return (scheme, location).

    - file:///abs/path -> ("file", "/abs/path")
    - anything without a "scheme://" prefix is a plain path, taken verbatim
      ("results/run#1" and "a:b" included).
    """
    scheme, sep, rest = uri.partition("://")
    if not sep:
        return "file", uri
    if scheme.lower() != "file":
        raise ArtifactIoError(f"Unsupported storage_uri: {uri}")
    return "file", rest


class StorageAdapter(ABC):
    @abstractmethod
    def put_bytes(self, key: str, data: bytes, *, overwrite: bool = True) -> str: ...
    @abstractmethod
    def get_bytes(self, key: str) -> bytes: ...
    @abstractmethod
    def exists(self, key: str) -> bool: ...

    def put_text(self, key: str, text: str, *, overwrite: bool = True) -> str:
        return self.put_bytes(key, text.encode("utf-8"), overwrite=overwrite)

    def get_text(self, key: str) -> str:
        return self.get_bytes(key).decode("utf-8")


class LocalStorage(StorageAdapter):
    """Artifacts under a results directory, addressed by relative keys."""

    def __init__(self, root: str) -> None:
        self.root = os.path.abspath(root)
        try:
            os.makedirs(self.root, exist_ok=True)
        except OSError as e:
            raise ArtifactIoError(f"cannot create output directory {self.root}: {e}") from e

    def _full(self, key: str) -> str:
        p = os.path.join(self.root, key)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def put_bytes(self, key: str, data: bytes, *, overwrite: bool = True) -> str:
        path = self._full(key)
        if overwrite or not os.path.exists(path):
            try:
                with open(path, "wb") as f:
                    f.write(data)
            except OSError as e:
                raise ArtifactIoError(f"cannot write {path}: {e}") from e
        return f"file://{path}"

    def exists(self, key: str) -> bool:
        return os.path.exists(os.path.join(self.root, key))

    def get_bytes(self, key: str) -> bytes:
        try:
            with open(os.path.join(self.root, key), "rb") as f:
                return f.read()
        except OSError as e:
            raise ArtifactIoError(f"cannot read {key}: {e}") from e

    def append_text(self, key: str, line: str) -> None:
        try:
            with open(self._full(key), "a", encoding="utf-8") as f:
                f.write(line)
        except OSError as e:
            raise ArtifactIoError(f"cannot append to {key}: {e}") from e


def make_storage(root: str) -> LocalStorage:
    _, location = parse_storage_uri(root)
    return LocalStorage(location)
