"""Serve a tuned model over the shared chat-completion wire contract.

Request:  {"model": str, "messages": [{"role": str, "content": str}], "temperature": number}
Response: {"choices": [{"message": {"content": str}}]}

Completions decode greedily and stop at end-of-sequence, a newline, or the
max-new-tokens bound. Requests are handled on independent threads with no
shared mutable session state.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .lora import apply_lora, load_adapter
from .model import TinyCausalLM, load_model
from .tokenizer import CharTokenizer


class TunedCompleter:
    """Loads base + adapter once and produces completions for prompts."""

    def __init__(self, adapter_dir: str | Path, max_new_tokens: int = 256):
        adapter_dir = Path(adapter_dir)
        metadata = json.loads((adapter_dir / "metadata.json").read_text(encoding="utf-8"))
        self.model: TinyCausalLM = load_model(metadata["base_model_id"])
        apply_lora(self.model, metadata["rank"], metadata["alpha"])
        load_adapter(self.model, adapter_dir / "adapter.pt")
        self.model.eval()
        self.tokenizer = CharTokenizer.load(adapter_dir / "tokenizer.json")
        self.max_new_tokens = max_new_tokens
        newline = self.tokenizer.encode("\n")
        self.stop_ids = {self.tokenizer.eos_id, *newline}

    def complete(self, messages: list[dict]) -> str:
        prompt = "\n".join(str(m.get("content", "")) for m in messages) + "\n"
        ids = self.tokenizer.encode(prompt)
        window = self.model.config.n_positions - self.max_new_tokens
        if window > 0 and len(ids) > window:
            ids = ids[-window:]
        out = self.model.generate(ids, self.max_new_tokens, self.stop_ids)
        return self.tokenizer.decode(out)


def _make_handler(completer: TunedCompleter):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, status: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", 0))
                request = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                self._reply(400, {"error": {"message": "request body is not valid JSON"}})
                return
            messages = request.get("messages")
            if not isinstance(messages, list) or not messages:
                self._reply(400, {"error": {"message": "request needs a non-empty 'messages' list"}})
                return
            content = completer.complete(messages)
            self._reply(200, {"choices": [{"message": {"content": content}}]})

    return Handler


def serve(
    adapter_dir: str | Path,
    port: int = 8077,
    host: str = "127.0.0.1",
    max_new_tokens: int = 256,
) -> ThreadingHTTPServer:
    """Bind and return the server; caller runs serve_forever (CLI) or a thread (tests)."""
    completer = TunedCompleter(adapter_dir, max_new_tokens=max_new_tokens)
    return ThreadingHTTPServer((host, port), _make_handler(completer))


def serve_in_thread(adapter_dir: str | Path, max_new_tokens: int = 256):
    """Test helper: serve on an ephemeral port; returns (server, base_url, thread)."""
    server = serve(adapter_dir, port=0, max_new_tokens=max_new_tokens)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    return server, f"http://{host}:{port}/v1/chat/completions", thread
