"""Client for the encoder/decoder bridge protocol.

A bridge server hosts a real model (or a stub) behind four endpoints:
POST /v1/encode, /v1/lm_loss, /v1/generate and GET /health. Matrices
travel as base64-encoded little-endian float32, row-major; every request
and response carries a top-level protocol version ``"v": 1``. Float32 on
the wire is a deliberate lossy cast regardless of server-side precision.

:class:`RemoteEncoder` satisfies the same structural interface as the
toy encoder, so a pipeline can be pointed at a live model by swapping a
single constructor argument. Transport problems and shape problems raise
distinct exceptions: a timeout is retryable, a width mismatch against the
projector configuration is not.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
import requests

from sdcc.corpus import SENTINEL_ID, TokenSequence
from sdcc.encoder import ROLE_CONTENT, ROLE_SENTINEL, ROLE_SLOT, HiddenMatrix

PROTOCOL_VERSION = 1


class BridgeError(RuntimeError):
    pass


class BridgeTransportError(BridgeError):
    """The server could not be reached or did not answer in time."""


class BridgeShapeError(BridgeError):
    """The server answered, but the payload geometry is wrong."""


@dataclass(frozen=True)
class BridgeClientConfig:
    base_url: str
    timeout: float = 30.0


def encode_matrix_base64(matrix: np.ndarray) -> str:
    """Row-major little-endian float32 bytes, base64-encoded."""
    arr = np.ascontiguousarray(np.asarray(matrix), dtype="<f4")
    return base64.b64encode(arr.tobytes(order="C")).decode("ascii")


def decode_matrix_base64(data: str, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`encode_matrix_base64`; validates the byte count."""
    raw = base64.b64decode(data)
    expected = rows * cols * 4
    if len(raw) != expected:
        raise BridgeShapeError(f"matrix payload is {len(raw)} bytes, expected {expected} ({rows}x{cols})")
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols)


def _post(config: BridgeClientConfig, path: str, payload: dict) -> dict:
    url = config.base_url.rstrip("/") + path
    try:
        response = requests.post(url, json=payload, timeout=config.timeout)
    except requests.exceptions.RequestException as exc:
        raise BridgeTransportError(f"bridge transport failure on {path}: {exc}") from exc
    if response.status_code != 200:
        raise BridgeError(f"bridge returned HTTP {response.status_code} on {path}: {response.text[:200]}")
    return response.json()


def health(config: BridgeClientConfig) -> dict:
    url = config.base_url.rstrip("/") + "/health"
    try:
        response = requests.get(url, timeout=config.timeout)
        response.raise_for_status()
        return response.json()
    except requests.exceptions.RequestException as exc:
        raise BridgeTransportError(f"bridge health check failed: {exc}") from exc


class RemoteEncoder:
    """Encoder-protocol adapter over the bridge.

    Deterministic per server process with fixed seeds; cross-machine bit
    identity is not promised (that is the toy encoder's job).
    """

    def __init__(self, client_config: BridgeClientConfig, attention_mode: str = "causal"):
        self.client_config = client_config
        self.attention_mode = attention_mode

    def encode(self, tokens: TokenSequence, appended_slots: int = 0) -> HiddenMatrix:
        if len(tokens) == 0 or tokens.tokens[-1] != SENTINEL_ID:
            raise ValueError("input not prepared: run prepare_encoder_input first")
        if appended_slots < 0:
            raise ValueError("appended_slots must be >= 0")
        data = _post(
            self.client_config,
            "/v1/encode",
            {
                "v": PROTOCOL_VERSION,
                "op": "encode",
                "tokens": list(tokens.tokens),
                "attention_mode": self.attention_mode,
                "appended_slots": appended_slots,
            },
        )
        try:
            rows, cols = data["shape"]
            payload = data["data"]
        except (KeyError, ValueError, TypeError) as exc:
            raise BridgeShapeError(f"malformed encode response: {data!r}") from exc
        expected_rows = len(tokens) + appended_slots
        if rows != expected_rows:
            raise BridgeShapeError(f"server returned {rows} rows for {expected_rows} positions")
        matrix = decode_matrix_base64(payload, rows, cols)
        roles = (ROLE_CONTENT,) * (len(tokens) - 1) + (ROLE_SENTINEL,) + (ROLE_SLOT,) * appended_slots
        return HiddenMatrix(matrix.astype(np.float64), roles)


def remote_encode(
    client_config: BridgeClientConfig,
    tokens: TokenSequence,
    attention_mode: str = "causal",
    appended_slots: int = 0,
) -> HiddenMatrix:
    """One-shot remote encode; drop-in for the local encode operation."""
    return RemoteEncoder(client_config, attention_mode).encode(tokens, appended_slots)


def remote_lm_loss(config: BridgeClientConfig, tokens: TokenSequence, labels: TokenSequence) -> float:
    """Causal LM loss of ``labels`` continuing ``tokens``, per the server's model."""
    data = _post(
        config,
        "/v1/lm_loss",
        {
            "v": PROTOCOL_VERSION,
            "op": "lm_loss",
            "tokens": list(tokens.tokens),
            "labels": list(labels.tokens),
        },
    )
    if "loss" not in data:
        raise BridgeShapeError(f"malformed lm_loss response: {data!r}")
    return float(data["loss"])


def remote_generate(
    config: BridgeClientConfig,
    tokens: TokenSequence,
    span_start: int,
    latents: np.ndarray,
    max_new_tokens: int = 64,
) -> str:
    """Generate with the span's input embeddings overridden by ``latents``."""
    latents = np.asarray(latents)
    data = _post(
        config,
        "/v1/generate",
        {
            "v": PROTOCOL_VERSION,
            "op": "generate",
            "tokens": list(tokens.tokens),
            "override_span": [span_start, int(latents.shape[0])],
            "latents_shape": [int(latents.shape[0]), int(latents.shape[1])],
            "latents": encode_matrix_base64(latents),
            "max_new_tokens": max_new_tokens,
        },
    )
    if "text" not in data:
        raise BridgeShapeError(f"malformed generate response: {data!r}")
    return data["text"]
