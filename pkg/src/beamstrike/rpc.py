"""JSON transports shared by the external adapters.

Two transports speak the same request/response bodies:

* ``http``: one JSON POST per call to ``<url><route>``.
* ``stdio``: a long-lived child process; one JSON object per line in each
  direction. Requests carry a ``"route"`` key so one process can serve
  several routes.

Every body carries ``"schema": "v1"``.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import threading
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

SCHEMA_VERSION = "v1"
CACHE_ENV = "BEAMSTRIKE_CACHE_DIR"


class TransportError(RuntimeError):
    pass


class SchemaMismatch(TransportError):
    pass


class Transport:
    def call(self, route: str, payload: Mapping[str, Any]) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def describe(self) -> str:
        raise NotImplementedError


class HttpTransport(Transport):
    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def call(self, route, payload):
        body = json.dumps(dict(payload, schema=SCHEMA_VERSION)).encode("utf-8")
        request = urllib.request.Request(
            self.url + route, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                raw = response.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"{self.url}{route}: {exc}") from exc
        return _decode(raw, self.describe())

    def describe(self):
        return f"http:{self.url}"


class StdioTransport(Transport):
    """Line-delimited JSON over a child process. Calls are serialized."""

    def __init__(self, command: Sequence[str], timeout: float = 10.0):
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot start {self.command!r}: {exc}") from exc

    def call(self, route, payload):
        line = json.dumps(dict(payload, schema=SCHEMA_VERSION, route=route))
        with self._lock:
            if self._proc.poll() is not None:
                raise TransportError(f"process {self.command!r} exited with {self._proc.returncode}")
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                reply = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"process {self.command!r}: {exc}") from exc
        if not reply:
            raise TransportError(f"process {self.command!r} closed its output")
        return _decode(reply.encode("utf-8"), self.describe())

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def describe(self):
        return "stdio:" + " ".join(self.command)


def _decode(raw: bytes, where: str) -> dict:
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"{where}: malformed JSON response") from exc
    if not isinstance(data, dict):
        raise SchemaMismatch(f"{where}: response is not a JSON object")
    if "error" in data:
        raise TransportError(f"{where}: remote error: {data['error']}")
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise SchemaMismatch(f"{where}: expected schema {SCHEMA_VERSION!r}, got {schema!r}")
    return data


def make_transport(config: Mapping[str, Any]) -> Transport:
    """Build a transport from ``{"transport": "http", "url": ...}`` or
    ``{"transport": "stdio", "command": [...]}``."""
    kind = config.get("transport", "http")
    timeout = float(config.get("timeout", 10.0))
    requested = config.get("schema", SCHEMA_VERSION)
    if requested != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema {requested!r}; this client speaks {SCHEMA_VERSION!r}")
    if kind == "http":
        if not config.get("url"):
            raise TransportError("http transport needs a url")
        return HttpTransport(config["url"], timeout)
    if kind == "stdio":
        command = config.get("command")
        if isinstance(command, str):
            command = command.split()
        if not command:
            raise TransportError("stdio transport needs a command")
        return StdioTransport(command, timeout)
    raise TransportError(f"unknown transport {kind!r}")


class ResponseCache:
    """On-disk cache of transport responses keyed by request content.

    Enabled only when ``BEAMSTRIKE_CACHE_DIR`` is set.
    """

    def __init__(self, root: Optional[os.PathLike] = None):
        root = root if root is not None else os.environ.get(CACHE_ENV)
        self.root = Path(root) if root else None

    @property
    def enabled(self) -> bool:
        return self.root is not None

    def _path(self, namespace: str, payload: Mapping[str, Any]) -> Path:
        key = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()
        return self.root / namespace / f"{key}.json"

    def get(self, namespace, payload):
        if not self.enabled:
            return None
        path = self._path(namespace, payload)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def put(self, namespace, payload, response):
        if not self.enabled:
            return
        path = self._path(namespace, payload)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps(response), encoding="utf-8")
        tmp.replace(path)
