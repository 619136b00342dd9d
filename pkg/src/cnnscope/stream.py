"""Socket co-processing pipeline: stream per-step geometry, receive commands.

Wire format: each frame is a 4-byte big-endian unsigned payload length
followed by a UTF-8 JSON object {type, step, seq, body}.  Frame types:
hello, step_begin, geometry, similarity, prune_proposal, prune_command,
prune_ack, step_end, bye.  Protocol version 1.

Design rules:
  * publish_step never blocks training: a bounded queue of whole step groups
    drops the oldest group when full, and with no viewer connected frames are
    dropped outright.
  * one viewer at a time; a lost connection reverts the session to headless.
  * commands are only drained at step boundaries via poll_commands().
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from .pruning import PrunePlan
from .views import PolyData

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
FRAME_TYPES = {
    "hello",
    "step_begin",
    "geometry",
    "similarity",
    "prune_proposal",
    "prune_command",
    "prune_ack",
    "step_end",
    "bye",
}


# ---------------------------------------------------------------------------
# Framing


def pack_frame(payload: dict) -> bytes:
    """Length-prefix a JSON payload: 4-byte big-endian size + UTF-8 body."""
    if payload.get("type") not in FRAME_TYPES:
        raise ValueError(f"unknown frame type {payload.get('type')!r}")
    body = json.dumps(payload, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return struct.pack(">I", len(body)) + body


class FrameSplitter:
    """Incremental decoder: feed byte chunks, get back complete payloads."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[dict]:
        self._buf.extend(chunk)
        frames = []
        while True:
            if len(self._buf) < 4:
                break
            (size,) = struct.unpack(">I", self._buf[:4])
            if len(self._buf) < 4 + size:
                break
            body = bytes(self._buf[4 : 4 + size])
            del self._buf[: 4 + size]
            frames.append(json.loads(body.decode("utf-8")))
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


# ---------------------------------------------------------------------------
# Geometry <-> JSON bodies


def polydata_to_body(view: str, layer: int, pd: PolyData) -> dict:
    """Flatten PolyData into the JSON geometry body (float32-exact values)."""
    return {
        "view": view,
        "layer": layer,
        "points": [float(v) for v in pd.points.ravel()],
        "verts": [int(v) for v in pd.verts],
        "quads": [int(v) for v in pd.quads.ravel()],
        "scalars": {name: [float(v) for v in arr] for name, arr in pd.point_scalars.items()},
    }


def body_to_polydata(body: dict) -> PolyData:
    return PolyData(
        points=np.asarray(body["points"], dtype=np.float32).reshape(-1, 3),
        verts=np.asarray(body["verts"], dtype=np.int64),
        quads=np.asarray(body["quads"], dtype=np.int64).reshape(-1, 4),
        point_scalars={k: np.asarray(v, dtype=np.float32) for k, v in body["scalars"].items()},
    )


# ---------------------------------------------------------------------------
# Commands and publish outcomes


@dataclass(frozen=True)
class PruneCommand:
    proposal_id: str
    action: str  # "apply" or "dismiss"
    plan: PrunePlan


@dataclass
class PublishOutcome:
    queued: bool
    viewer_connected: bool
    dropped_groups: int  # total dropped so far


class StreamSession:
    """Server half of the pipeline, owned by the training process."""

    def __init__(self, bind_address, summary: dict, queue_groups: int = 8):
        host, port = bind_address if isinstance(bind_address, tuple) else _split_address(bind_address)
        self.summary = summary
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(1)
        self._listener.settimeout(0.2)

        self._lock = threading.Condition()
        self._client: socket.socket | None = None
        self._groups: deque[list[dict]] = deque()
        self._max_groups = queue_groups
        self._inbox: list[dict] = []
        self._proposals: dict[str, dict] = {}  # id -> {"plan": PrunePlan, "state": str}
        self._running = True
        self._seq = 0
        self.frames_sent = 0
        self.dropped_groups = 0  # queued groups evicted by back-pressure
        self.headless_drops = 0  # groups dropped because no viewer was connected

        self._accept_thread = threading.Thread(target=self._accept_loop, name="stream-accept", daemon=True)
        self._send_thread = threading.Thread(target=self._send_loop, name="stream-send", daemon=True)
        self._accept_thread.start()
        self._send_thread.start()

    # -- lifecycle ----------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()

    def close(self):
        with self._lock:
            self._running = False
            client = self._client
            self._lock.notify_all()
        if client is not None:
            try:
                client.sendall(pack_frame({"type": "bye", "step": None, "seq": self._seq, "body": {"reason": "shutdown"}}))
            except OSError:
                pass
            try:
                client.close()
            except OSError:
                pass
        try:
            self._listener.close()
        except OSError:
            pass
        self._send_thread.join(timeout=2.0)
        self._accept_thread.join(timeout=2.0)

    def viewer_connected(self) -> bool:
        with self._lock:
            return self._client is not None

    def wait_for_viewer(self, timeout: float) -> bool:
        with self._lock:
            self._lock.wait_for(lambda: self._client is not None or not self._running, timeout)
            return self._client is not None

    # -- accept / handshake ---------------------------------------------------

    def _accept_loop(self):
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with self._lock:
                busy = self._client is not None
            if busy:
                conn.close()  # single-viewer topology
                continue
            try:
                self._handshake(conn)
            except OSError:
                conn.close()

    def _handshake(self, conn: socket.socket):
        conn.settimeout(5.0)
        splitter = FrameSplitter()
        hello = None
        while hello is None:
            chunk = conn.recv(4096)
            if not chunk:
                conn.close()
                return
            frames = splitter.feed(chunk)
            if frames:
                hello = frames[0]
        if hello.get("type") != "hello" or hello.get("body", {}).get("protocol_version") != PROTOCOL_VERSION:
            conn.sendall(
                pack_frame({"type": "bye", "step": None, "seq": 0, "body": {"reason": "unsupported version"}})
            )
            conn.close()
            return
        conn.settimeout(None)
        payload = {"type": "hello", "step": None, "body": {"protocol_version": PROTOCOL_VERSION, **self.summary}}
        with self._lock:
            # the hello reply goes out while the send loop is excluded, so it
            # is on the wire before any step frames and before publish_step
            # can observe the viewer as connected
            self._seq = 0
            payload["seq"] = self._seq
            self._seq += 1
            conn.sendall(pack_frame(payload))
            self.frames_sent += 1
            self._client = conn
            self._lock.notify_all()
        reader = threading.Thread(target=self._read_loop, args=(conn, splitter), name="stream-read", daemon=True)
        reader.start()

    def _read_loop(self, conn: socket.socket, splitter: FrameSplitter):
        while True:
            try:
                chunk = conn.recv(4096)
            except OSError:
                chunk = b""
            if not chunk:
                self._drop_client(conn)
                return
            for frame in splitter.feed(chunk):
                if frame.get("type") == "prune_command":
                    with self._lock:
                        self._inbox.append(frame.get("body", {}))
                elif frame.get("type") == "bye":
                    self._drop_client(conn)
                    return

    def _drop_client(self, conn: socket.socket):
        with self._lock:
            if self._client is conn:
                self._client = None
                self._groups.clear()
        try:
            conn.close()
        except OSError:
            pass

    # -- sending ------------------------------------------------------------

    def _send_now(self, conn: socket.socket, payload: dict):
        with self._lock:
            payload["seq"] = self._seq
            self._seq += 1
        conn.sendall(pack_frame(payload))
        self.frames_sent += 1

    def _send_loop(self):
        while True:
            with self._lock:
                self._lock.wait_for(lambda: not self._running or (self._groups and self._client is not None))
                if not self._running:
                    return
                group = self._groups.popleft()
                conn = self._client
            try:
                for payload in group:
                    self._send_now(conn, payload)
            except OSError:
                logger.info("viewer connection lost; reverting to headless")
                self._drop_client(conn)

    def _enqueue_group(self, frames: list[dict]):
        with self._lock:
            if self._client is None:
                self.headless_drops += 1
                return False
            if len(self._groups) >= self._max_groups:
                self._groups.popleft()
                self.dropped_groups += 1
            self._groups.append(frames)
            self._lock.notify_all()
            return True

    # -- step publication -----------------------------------------------------

    def publish_step(self, step: int, geometries, report=None, proposal=None, loss: float | None = None) -> PublishOutcome:
        """Queue one step group: step_begin, geometry frames, optional
        similarity and prune_proposal frames, step_end."""
        frames = [{"type": "step_begin", "step": step, "body": {"loss": loss}}]
        for view, layer, pd in geometries:
            frames.append({"type": "geometry", "step": step, "body": polydata_to_body(view, layer, pd)})
        if report is not None:
            frames.append({"type": "similarity", "step": step, "body": report.to_jsonable()})
        if proposal is not None:
            frames.append({"type": "prune_proposal", "step": step, "body": proposal})
        frames.append(
            {"type": "step_end", "step": step, "body": {"frames": len(frames) + 1, "dropped_groups": self.dropped_groups}}
        )
        queued = self._enqueue_group(frames)
        return PublishOutcome(queued=queued, viewer_connected=self.viewer_connected(), dropped_groups=self.dropped_groups)

    # -- proposals / commands --------------------------------------------------

    def register_proposal(self, plan: PrunePlan) -> dict:
        """Track a plan awaiting a viewer decision; returns the proposal body."""
        proposal_id = f"p{plan.created_at_step:08d}_{plan.layer_id}"
        self._proposals[proposal_id] = {"plan": plan, "state": "pending"}
        return {"proposal_id": proposal_id, **plan.to_jsonable()}

    def pending_proposals(self) -> list[str]:
        return [pid for pid, p in self._proposals.items() if p["state"] == "pending"]

    def poll_commands(self, step: int | None = None) -> list[PruneCommand]:
        """Drain viewer commands; invalid ones are nacked here, valid returned."""
        with self._lock:
            raw, self._inbox = self._inbox, []
        commands = []
        for body in raw:
            pid = body.get("proposal_id")
            action = body.get("action")
            entry = self._proposals.get(pid)
            if entry is None or action not in ("apply", "dismiss"):
                self.send_ack(pid, applied=False, step=step, reason="unknown proposal")
            elif entry["state"] != "pending":
                self.send_ack(pid, applied=False, step=step, reason="already resolved")
            else:
                commands.append(PruneCommand(proposal_id=pid, action=action, plan=entry["plan"]))
        return commands

    def resolve(self, proposal_id: str, state: str):
        if proposal_id in self._proposals:
            self._proposals[proposal_id]["state"] = state

    def send_ack(self, proposal_id, applied: bool, step=None, new_filter_count=None, reason=None):
        body = {"proposal_id": proposal_id, "applied": applied}
        if new_filter_count is not None:
            body["new_filter_count"] = int(new_filter_count)
        if reason is not None:
            body["reason"] = reason
        self._enqueue_group([{"type": "prune_ack", "step": step, "body": body}])


def _split_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    return host or "127.0.0.1", int(port)


def serve(bind_address, summary: dict, queue_groups: int = 8) -> StreamSession:
    """Start the co-processing server; raises OSError if the address is taken."""
    return StreamSession(bind_address, summary, queue_groups=queue_groups)


# ---------------------------------------------------------------------------
# Viewer-side helper (tests, replay consumers)


class StreamClient:
    """Minimal synchronous client: handshake, frame iteration, commands."""

    def __init__(self, address, timeout: float = 10.0):
        host, port = address if isinstance(address, tuple) else _split_address(address)
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._splitter = FrameSplitter()
        self._queue: deque[dict] = deque()
        self._seq = 0

    def send(self, frame_type: str, body: dict, step=None):
        payload = {"type": frame_type, "step": step, "seq": self._seq, "body": body}
        self._seq += 1
        self._sock.sendall(pack_frame(payload))

    def hello(self) -> dict:
        self.send("hello", {"protocol_version": PROTOCOL_VERSION})
        reply = self.recv_frame()
        if reply["type"] == "bye":
            raise ConnectionError(f"server refused: {reply['body'].get('reason')}")
        return reply

    def recv_frame(self) -> dict:
        while not self._queue:
            chunk = self._sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            self._queue.extend(self._splitter.feed(chunk))
        return self._queue.popleft()

    def read_step_group(self) -> list[dict]:
        """Read frames until a complete step_begin..step_end group is seen.

        Standalone frames (acks) arriving between groups are returned as
        single-frame lists.
        """
        first = self.recv_frame()
        if first["type"] != "step_begin":
            return [first]
        group = [first]
        while True:
            frame = self.recv_frame()
            group.append(frame)
            if frame["type"] == "step_end":
                return group

    def send_prune_command(self, proposal_id: str, action: str):
        self.send("prune_command", {"proposal_id": proposal_id, "action": action})

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
