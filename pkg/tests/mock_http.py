"""In-process HTTP doubles: a scriptable chat endpoint and a repository.

Both run a real ThreadingHTTPServer on a loopback port so the clients
under test exercise genuine sockets, timeouts, and multipart bodies.
"""

from __future__ import annotations

import email.parser
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

# --- chat-completions double -------------------------------------------------


class MockLLMServer:
    """OpenAI-compatible /chat/completions endpoint with a scripted queue.

    Script actions:
        ("reply", text)                 200 with fixed usage
        ("reply", text, usage_dict)     200 with explicit usage
        ("sleep", seconds)              stall (lets the client time out)
        ("status", code)                error status, empty body
    When the script is empty the ``responder`` callable (request body ->
    (text, usage)) answers; the default responder echoes a fixed reply.
    """

    def __init__(self, responder=None):
        self.requests: list[dict] = []
        self.script: list[tuple] = []
        self.responder = responder or (lambda body: ('{"noop": true}', {"prompt_tokens": 1, "completion_tokens": 1}))
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _llm_handler(self))
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}/v1"

    def __enter__(self) -> "MockLLMServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()

    def enqueue(self, *actions: tuple) -> None:
        self.script.extend(actions)


def _llm_handler(mock: MockLLMServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length)) if length else {}
            mock.requests.append(
                {"path": self.path, "body": body, "headers": dict(self.headers)}
            )
            action = mock.script.pop(0) if mock.script else None
            try:
                if action is None:
                    text, usage = mock.responder(body)
                    self._reply(text, usage)
                elif action[0] == "reply":
                    usage = action[2] if len(action) > 2 else {"prompt_tokens": 10, "completion_tokens": 5}
                    self._reply(action[1], usage)
                elif action[0] == "sleep":
                    time.sleep(action[1])
                    self._reply('{"late": true}', {"prompt_tokens": 1, "completion_tokens": 1})
                elif action[0] == "status":
                    self.send_response(action[1])
                    if action[1] == 429:
                        self.send_header("Retry-After", "0.01")
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                else:
                    raise AssertionError(f"unknown script action {action!r}")
            except (BrokenPipeError, ConnectionResetError):
                pass  # client gave up (timeout tests)

        def _reply(self, text, usage):
            payload = {
                "choices": [{"message": {"role": "assistant", "content": text}}],
            }
            if usage is not None:
                payload["usage"] = usage
            data = json.dumps(payload).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler


# --- repository double ---------------------------------------------------------

DEFAULT_PROPERTY_TERMS = (
    "dcterms:title",
    "dcterms:creator",
    "dcterms:date",
    "dcterms:identifier",
    "dcterms:language",
    "dcterms:subject",
    "dcterms:description",
    "dcterms:spatial",
    "bibo:issue",
)


class MockRepositoryServer:
    """In-memory Omeka-S-style REST API.

    Tracks every request in ``log`` as (method, path) tuples and counts
    creations so idempotency tests can assert exact request behavior.
    """

    def __init__(self, auth: tuple[str, str] | None = None, terms=DEFAULT_PROPERTY_TERMS):
        self.auth = auth
        self.properties = {term: i + 1 for i, term in enumerate(terms)}
        self.items: dict[int, dict] = {}
        self.item_sets: dict[int, dict] = {}
        self.media: dict[int, dict] = {}
        self.log: list[tuple[str, str]] = []
        self._next_id = 1
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _repo_handler(self))
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}/api"

    def __enter__(self) -> "MockRepositoryServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()

    def allocate_id(self) -> int:
        with self._lock:
            new_id = self._next_id
            self._next_id += 1
            return new_id

    def creations(self, path: str) -> int:
        return sum(1 for method, p in self.log if method == "POST" and p == path)

    # Value lookup helpers shared by the handler's property filters.

    @staticmethod
    def resource_matches(resource: dict, property_id: int, text: str) -> bool:
        for key, entries in resource.items():
            if not isinstance(entries, list):
                continue
            for entry in entries:
                if (
                    isinstance(entry, dict)
                    and entry.get("property_id") == property_id
                    and entry.get("@value") == text
                ):
                    return True
        return False


def _repo_handler(mock: MockRepositoryServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _check_auth(self, params) -> bool:
            if mock.auth is None:
                return True
            identity, credential = mock.auth
            return (
                params.get("key_identity", [None])[0] == identity
                and params.get("key_credential", [None])[0] == credential
            )

        def _send_json(self, obj, status=200):
            data = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _filtered(self, resources, params):
            prop = params.get("property[0][property]", [None])[0]
            text = params.get("property[0][text]", [None])[0]
            values = list(resources.values())
            if prop is None or text is None:
                return values
            prop_id = int(prop)
            return [r for r in values if mock.resource_matches(r, prop_id, text)]

        def do_GET(self):
            parsed = urlparse(self.path)
            params = parse_qs(parsed.query)
            mock.log.append(("GET", parsed.path))
            if not self._check_auth(params):
                return self._send_json({"error": "unauthorized"}, status=401)
            if parsed.path == "/api/properties":
                listing = [{"o:id": i, "o:term": t} for t, i in mock.properties.items()]
                return self._send_json(listing)
            if parsed.path == "/api/items":
                return self._send_json(self._filtered(mock.items, params))
            if parsed.path == "/api/item_sets":
                return self._send_json(self._filtered(mock.item_sets, params))
            if parsed.path == "/api/media":
                item_id = params.get("item_id", [None])[0]
                listing = [
                    m for m in mock.media.values()
                    if item_id is None or m["o:item"]["o:id"] == int(item_id)
                ]
                return self._send_json(listing)
            self._send_json({"error": "not found"}, status=404)

        def do_POST(self):
            parsed = urlparse(self.path)
            params = parse_qs(parsed.query)
            mock.log.append(("POST", parsed.path))
            if not self._check_auth(params):
                return self._send_json({"error": "unauthorized"}, status=401)
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            content_type = self.headers.get("Content-Type", "")
            if parsed.path == "/api/items":
                body = json.loads(raw)
                new_id = mock.allocate_id()
                body["o:id"] = new_id
                mock.items[new_id] = body
                return self._send_json(body)
            if parsed.path == "/api/item_sets":
                body = json.loads(raw)
                new_id = mock.allocate_id()
                body["o:id"] = new_id
                mock.item_sets[new_id] = body
                return self._send_json(body)
            if parsed.path == "/api/media":
                meta, filename = _parse_media_multipart(raw, content_type)
                new_id = mock.allocate_id()
                entry = {"o:id": new_id, "o:item": meta["o:item"], "o:source": filename}
                mock.media[new_id] = entry
                return self._send_json(entry)
            self._send_json({"error": "not found"}, status=404)

    return Handler


def _parse_media_multipart(raw: bytes, content_type: str) -> tuple[dict, str]:
    message = email.parser.BytesParser().parsebytes(
        b"Content-Type: " + content_type.encode() + b"\r\n\r\n" + raw
    )
    meta: dict = {}
    filename = ""
    for part in message.get_payload():
        disposition = part.get("Content-Disposition", "")
        payload = part.get_payload(decode=True) or b""
        if 'name="data"' in disposition:
            meta = json.loads(payload)
        elif part.get_filename():
            filename = part.get_filename()
    return meta, filename
