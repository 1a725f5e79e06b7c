"""Black-box regression model abstraction.

Built-in kinds (synthetic-sine, linear, constant) are pure numpy kernels used
as analytically tractable test subjects.  The subprocess kind talks
newline-delimited JSON to an external process, which is the only access mode
the certification math actually needs: evaluations in, outputs back.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, TransportError

__all__ = [
    "KIND_CONSTANT",
    "KIND_LINEAR",
    "KIND_SINE",
    "KIND_SUBPROCESS",
    "ModelSpec",
    "OutputBounds",
    "SubprocessModel",
    "batch_evaluate",
    "clip_wrap",
    "evaluate",
    "open_model",
]

KIND_SINE = "synthetic-sine"
KIND_LINEAR = "linear"
KIND_CONSTANT = "constant"
KIND_SUBPROCESS = "subprocess"
_KINDS = (KIND_SINE, KIND_LINEAR, KIND_CONSTANT, KIND_SUBPROCESS)

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class OutputBounds:
    """Hard componentwise output range [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise DomainError("bounds shapes disagree")
        if np.any(lower > upper):
            raise DomainError("bounds require lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def broadcast(self, t: int) -> "OutputBounds":
        if self.lower.shape[0] == t:
            return self
        if self.lower.shape[0] == 1:
            return OutputBounds(np.full(t, self.lower[0]), np.full(t, self.upper[0]))
        raise DomainError(f"bounds have dimension {self.lower.shape[0]}, expected {t}")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a regression model.

    parameters: linear -> row-major t x d weight matrix; constant -> the
    output vector; synthetic-sine -> unused (d=2, t=1 fixed).  command is the
    child command line for the subprocess kind.
    """

    kind: str
    input_dim: int
    output_dim: int
    parameters: tuple = ()
    command: str | tuple[str, ...] | None = None
    clips: tuple[OutputBounds, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        d, t = int(self.input_dim), int(self.output_dim)
        if d < 1 or t < 1:
            raise DomainError("input_dim and output_dim must be >= 1")
        params = tuple(float(v) for v in self.parameters)
        if self.kind == KIND_SINE and (d, t) != (2, 1):
            raise DomainError("synthetic-sine is fixed at input_dim=2, output_dim=1")
        if self.kind == KIND_LINEAR and len(params) != t * d:
            raise DomainError(f"linear kind needs {t * d} parameters, got {len(params)}")
        if self.kind == KIND_CONSTANT and len(params) != t:
            raise DomainError(f"constant kind needs {t} parameters, got {len(params)}")
        if self.kind == KIND_SUBPROCESS:
            if not self.command:
                raise DomainError("subprocess kind requires a non-empty command")
        object.__setattr__(self, "input_dim", d)
        object.__setattr__(self, "output_dim", t)
        object.__setattr__(self, "parameters", params)

    def command_argv(self) -> list[str]:
        if isinstance(self.command, str):
            return shlex.split(self.command)
        return list(self.command)


def clip_wrap(model: ModelSpec, bounds: OutputBounds) -> ModelSpec:
    """Model whose every output is clamped componentwise into the bounds."""
    bounds = bounds.broadcast(model.output_dim)
    return replace(model, clips=model.clips + (bounds,))


def _builtin_kernel(spec: ModelSpec, xs: np.ndarray) -> np.ndarray:
    if spec.kind == KIND_SINE:
        y = (10.0 * np.sin(2.0 * xs[:, 0]) + (xs[:, 1] - 2.0) ** 2 + 15.0)[:, None]
    elif spec.kind == KIND_LINEAR:
        w = np.array(spec.parameters).reshape(spec.output_dim, spec.input_dim)
        y = xs @ w.T
    elif spec.kind == KIND_CONSTANT:
        y = np.tile(np.array(spec.parameters), (xs.shape[0], 1))
    else:
        raise DomainError(f"{spec.kind} is not a built-in kind")
    for clip in spec.clips:
        y = np.clip(y, clip.lower, clip.upper)
    return y


class _BuiltinModel:
    """Callable handle over a built-in ModelSpec; mirrors SubprocessModel's surface."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.input_dim = spec.input_dim
        self.output_dim = spec.output_dim

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        return _builtin_kernel(self.spec, xs)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class _LineReader:
    """Deadline-aware line reader over a raw pipe file descriptor."""

    def __init__(self, fd: int):
        self.fd = fd
        self.buf = b""

    def readline(self, deadline: float) -> bytes:
        while True:
            nl = self.buf.find(b"\n")
            if nl >= 0:
                line, self.buf = self.buf[: nl + 1], self.buf[nl + 1:]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            ready, _, _ = select.select([self.fd], [], [], remaining)
            if not ready:
                raise TimeoutError
            chunk = os.read(self.fd, 65536)
            if not chunk:
                if self.buf:
                    line, self.buf = self.buf, b""
                    return line
                return b""
            self.buf += chunk


class SubprocessModel:
    """Serializes evaluations over one child process speaking JSON lines.

    Wire protocol: the child prints a handshake line
    ``{"input_dim":d,"output_dim":t}`` on startup; the parent then writes one
    ``{"id":<int>,"x":[...]}`` line per evaluation and the child answers each
    with ``{"id":<int>,"y":[...]}``.  The child exits when its stdin closes.
    """

    def __init__(self, spec: ModelSpec, timeout: float = DEFAULT_TIMEOUT):
        if spec.kind != KIND_SUBPROCESS:
            raise DomainError("SubprocessModel requires a subprocess ModelSpec")
        self.spec = spec
        self.timeout = float(timeout)
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                spec.command_argv(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            raise TransportError(f"failed to start model command: {exc}") from exc
        self._reader = _LineReader(self._proc.stdout.fileno())
        handshake = self._read_json(time.monotonic() + self.timeout, context="handshake")
        try:
            child_d = int(handshake["input_dim"])
            child_t = int(handshake["output_dim"])
        except (KeyError, TypeError, ValueError):
            self._fail(f"malformed handshake: {handshake!r}")
        if (child_d, child_t) != (spec.input_dim, spec.output_dim):
            self._fail(
                f"child reports dims ({child_d}, {child_t}), "
                f"spec says ({spec.input_dim}, {spec.output_dim})"
            )
        self.input_dim = spec.input_dim
        self.output_dim = spec.output_dim

    def _stderr_excerpt(self) -> str:
        try:
            self._proc.kill()
            _, err = self._proc.communicate(timeout=5)
            return err.decode(errors="replace").strip()[-2000:]
        except Exception:
            return "<stderr unavailable>"

    def _fail(self, message: str):
        detail = self._stderr_excerpt()
        suffix = f"; child stderr: {detail}" if detail else ""
        raise TransportError(message + suffix)

    def _read_json(self, deadline: float, context: str) -> dict:
        try:
            line = self._reader.readline(deadline)
        except TimeoutError:
            self._fail(f"timed out waiting for {context} after {self.timeout}s")
        if not line:
            self._fail(f"child closed its output during {context}")
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            self._fail(f"malformed {context} line: {line[:200]!r}")

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        m = xs.shape[0]
        first_id = self._next_id
        self._next_id += m
        lines = b"".join(
            json.dumps({"id": first_id + i, "x": [float(v) for v in xs[i]]},
                       separators=(",", ":")).encode() + b"\n"
            for i in range(m)
        )
        writer_error: list[BaseException] = []

        def _write():
            try:
                self._proc.stdin.write(lines)
                self._proc.stdin.flush()
            except BaseException as exc:  # surfaced after the read loop fails
                writer_error.append(exc)

        writer = threading.Thread(target=_write, daemon=True)
        writer.start()
        out = np.empty((m, self.output_dim))
        deadline = time.monotonic() + self.timeout
        for i in range(m):
            reply = self._read_json(deadline, context=f"reply to request {first_id + i}")
            if reply.get("id") != first_id + i:
                self._fail(f"reply id {reply.get('id')!r} does not match request {first_id + i}")
            y = reply.get("y")
            if not isinstance(y, list) or len(y) != self.output_dim:
                self._fail(f"reply to request {first_id + i} has malformed y: {y!r}")
            out[i] = y
        writer.join(timeout=1.0)
        if writer_error:
            self._fail(f"failed to write requests: {writer_error[0]}")
        for clip in self.spec.clips:
            out = np.clip(out, clip.lower, clip.upper)
        return out

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
        if self._proc.stdout:
            self._proc.stdout.close()
        if self._proc.stderr:
            self._proc.stderr.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def open_model(model, timeout: float = DEFAULT_TIMEOUT):
    """Turn a ModelSpec into a callable evaluation handle.

    Built-in kinds return a free wrapper; the subprocess kind starts one
    child process that lives until close().  Already-opened handles pass
    through unchanged.
    """
    if isinstance(model, ModelSpec):
        if model.kind == KIND_SUBPROCESS:
            return SubprocessModel(model, timeout=timeout)
        return _BuiltinModel(model)
    return model


def _resolve(model):
    """(handle, owned) pair; owned handles must be closed by the caller."""
    if isinstance(model, ModelSpec):
        if model.kind == KIND_SUBPROCESS:
            return SubprocessModel(model), True
        return _BuiltinModel(model), False
    return model, False


def evaluate(model, x) -> np.ndarray:
    """Single evaluation f(x) as a length-t vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    handle, owned = _resolve(model)
    if x.shape != (handle.input_dim,):
        if owned:
            handle.close()
        raise DomainError(f"x has shape {x.shape}, expected ({handle.input_dim},)")
    try:
        return handle(x[None, :])[0]
    finally:
        if owned:
            handle.close()


def batch_evaluate(model, xs, chunk_size: int | None = None) -> np.ndarray:
    """Map evaluate over rows of xs; the result never depends on chunking."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        handle, owned = _resolve(model)
        if owned:
            handle.close()
        return np.empty((0, handle.output_dim))
    xs = np.atleast_2d(xs)
    handle, owned = _resolve(model)
    try:
        if xs.shape[1] != handle.input_dim:
            raise DomainError(
                f"inputs have dimension {xs.shape[1]}, expected {handle.input_dim}")
        if chunk_size is None or chunk_size >= xs.shape[0]:
            return handle(xs)
        parts = []
        for start in range(0, xs.shape[0], chunk_size):
            try:
                parts.append(handle(xs[start:start + chunk_size]))
            except TransportError as exc:
                raise TransportError(f"batch failed at row {start}: {exc}") from exc
        return np.vstack(parts)
    finally:
        if owned:
            handle.close()
