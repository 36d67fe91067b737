"""HTTP service exposing the embedding (and optional generation) protocol.

    POST /embed_text   {"text": str}            -> {"vector": [float, ...]}
    POST /embed_image  {"image": base64 str}    -> {"vector": [float, ...]}
    GET  /info                                  -> {"dimension": int, "model": str}
    POST /generate     {"image", "prompt", ...} -> {"text": str}   (deterministic mode only)

Errors come back as HTTP status + {"error": str}: 400 for empty text,
422 for undecodable images. Handlers are stateless; model weights (model
mode) load once at startup and are read-only afterwards.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import hashlib
import json
import sys
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from . import vectors

MODES = ("deterministic", "model")
DEFAULT_MODEL_NAME = "clip-ViT-B-32"


@dataclass
class ServiceConfig:
    mode: str = "deterministic"
    dimension: int = 64
    seed: int = 0
    model_name: str = DEFAULT_MODEL_NAME
    host: str = "127.0.0.1"
    port: int = 8090
    token: str | None = None
    generate_script: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")


class ModelEmbedder:
    """CLIP-class checkpoint behind the same interface; loaded lazily."""

    def __init__(self, model_name: str) -> None:
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_name)
        probe = self.model.encode(["dimension probe"], normalize_embeddings=True)
        self.dimension = int(probe.shape[1])
        self.model_name = model_name

    def embed_text(self, text: str) -> list[float]:
        vec = self.model.encode([text], normalize_embeddings=True)[0]
        return [float(v) for v in vec]

    def embed_image(self, image) -> list[float]:
        vec = self.model.encode([image], normalize_embeddings=True)[0]
        return [float(v) for v in vec]


def script_key(image_bytes: bytes) -> str:
    """Key used by the /generate fixture script: digest of the file bytes."""
    return hashlib.sha256(image_bytes).hexdigest()[:16]


def build_handler(config: ServiceConfig, embedder: ModelEmbedder | None):
    class Handler(BaseHTTPRequestHandler):
        server_version = "embed-service/0.1"

        def log_message(self, *args) -> None:
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _authorized(self) -> bool:
            if not config.token:
                return True
            return self.headers.get("Authorization") == f"Bearer {config.token}"

        def _read_json(self) -> dict | None:
            length = int(self.headers.get("Content-Length") or 0)
            try:
                return json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                return None

        def do_GET(self) -> None:
            if not self._authorized():
                self._send(401, {"error": "missing or invalid token"})
                return
            if self.path.rstrip("/") in ("", "/info"):
                model = config.model_name if config.mode == "model" else "deterministic"
                self._send(200, {"dimension": _dimension(), "model": model})
                return
            self._send(404, {"error": f"no such endpoint: {self.path}"})

        def do_POST(self) -> None:
            if not self._authorized():
                self._send(401, {"error": "missing or invalid token"})
                return
            payload = self._read_json()
            if payload is None:
                self._send(400, {"error": "request body must be JSON"})
                return
            if self.path == "/embed_text":
                self._embed_text(payload)
            elif self.path == "/embed_image":
                self._embed_image(payload)
            elif self.path == "/generate":
                self._generate(payload)
            else:
                self._send(404, {"error": f"no such endpoint: {self.path}"})

        def _embed_text(self, payload: dict) -> None:
            text = payload.get("text", "")
            if not isinstance(text, str) or not text.strip():
                self._send(400, {"error": "text must be non-empty"})
                return
            if config.mode == "deterministic":
                vector = vectors.text_vector(text, config.dimension, config.seed)
            else:
                vector = embedder.embed_text(text)
            self._send(200, {"vector": vector})

        def _embed_image(self, payload: dict) -> None:
            encoded = payload.get("image", "")
            try:
                blob = base64.b64decode(encoded, validate=True)
            except (binascii.Error, TypeError):
                self._send(422, {"error": "image must be valid base64"})
                return
            if config.mode == "deterministic":
                try:
                    vector = vectors.image_vector(blob, config.dimension, config.seed)
                except (UnidentifiedImageError, OSError, ValueError):
                    self._send(422, {"error": "payload is not a decodable image"})
                    return
            else:
                import io

                try:
                    with Image.open(io.BytesIO(blob)) as image:
                        image.load()
                        vector = embedder.embed_image(image.convert("RGB"))
                except (UnidentifiedImageError, OSError, ValueError):
                    self._send(422, {"error": "payload is not a decodable image"})
                    return
            self._send(200, {"vector": vector})

        def _generate(self, payload: dict) -> None:
            if config.mode != "deterministic":
                self._send(501, {"error": "generation is only served in deterministic mode"})
                return
            encoded = payload.get("image", "")
            try:
                blob = base64.b64decode(encoded, validate=True)
            except (binascii.Error, TypeError):
                self._send(422, {"error": "image must be valid base64"})
                return
            key = script_key(blob)
            text = config.generate_script.get(key, config.generate_script.get("*"))
            if text is None:
                self._send(404, {"error": f"no scripted response for image {key}"})
                return
            self._send(200, {"text": text})

    def _dimension() -> int:
        return embedder.dimension if embedder is not None else config.dimension

    return Handler


def make_server(config: ServiceConfig) -> ThreadingHTTPServer:
    embedder = None
    if config.mode == "model":
        embedder = ModelEmbedder(config.model_name)
    handler = build_handler(config, embedder)
    return ThreadingHTTPServer((config.host, config.port), handler)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-service", description=__doc__)
    parser.add_argument("--mode", choices=MODES, default="deterministic")
    parser.add_argument("--dimension", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--model-name", default=DEFAULT_MODEL_NAME)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--token", default=None)
    parser.add_argument(
        "--generate-script",
        default=None,
        help="JSON file mapping script_key(image bytes) -> canned generation text",
    )
    args = parser.parse_args(argv)

    script = {}
    if args.generate_script:
        script = json.loads(Path(args.generate_script).read_text(encoding="utf-8"))
    config = ServiceConfig(
        mode=args.mode,
        dimension=args.dimension,
        seed=args.seed,
        model_name=args.model_name,
        host=args.host,
        port=args.port,
        token=args.token,
        generate_script=script,
    )
    server = make_server(config)
    host, port = server.server_address[:2]
    print(f"embed-service listening on http://{host}:{port} (mode={config.mode})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main())
