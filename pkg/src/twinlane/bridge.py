"""Framed JSON message bridge between the plant and the autonomy stack.

Wire format. Every frame is a 4-byte big-endian unsigned body length
followed by the body. Envelope bodies are canonical JSON with the fields
in fixed order and no insignificant whitespace:

    {"topic":...,"type":...,"seq":...,"stamp":...,"data":...}

Floats serialize with shortest round-trip decimal text, so value -> text
-> value is bit-exact. The first frame each side sends must be an
`@handshake` envelope listing its topic declarations; outbound topics pair
with the peer's inbound declarations of identical topic and type tag.
Unmatched topics warn; a type-tag conflict on a shared topic is an error.

Binary payloads (camera pixels) ride as a raw frame immediately after an
envelope whose type tag is registered as binary; the envelope's data
carries the byte count. Only that one following frame is raw bytes; the
stream is otherwise self-describing JSON.

Transports carry opaque bytes: an in-memory loopback pair (with optional
chunking to exercise reassembly) and a plain TCP stream socket. Neither
reconnects; retry policy belongs to the caller.
"""

from __future__ import annotations

import json
import socket
import struct
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

DEFAULT_MAX_FRAME_SIZE = 16 * 1024 * 1024

OUTBOUND = "outbound"
INBOUND = "inbound"

HANDSHAKE_TOPIC = "@handshake"


# ---------------------------------------------------------------------------
# error taxonomy

class BridgeError(Exception):
    """Base class for all bridge failures."""


class FrameTooLargeError(BridgeError):
    """Length prefix exceeds the configured maximum frame size."""


class FrameEncodingError(BridgeError):
    """Frame body is not valid UTF-8."""


class FrameJsonError(BridgeError):
    """Frame body is not valid JSON."""


class MissingFieldError(BridgeError):
    """Envelope JSON lacks a required field."""


class TopicError(BridgeError):
    """Invalid, undeclared, or unmatched topic use."""


class HandshakeError(BridgeError):
    """First frame was not a handshake, or declarations are unusable."""


class TypeTagConflictError(HandshakeError):
    """Both sides declare the same topic with different type tags."""


class CodecError(BridgeError):
    """Payload does not satisfy its codec."""


class TransportClosedError(BridgeError):
    """The peer is gone and no buffered data remains."""


# ---------------------------------------------------------------------------
# envelopes and frames

@dataclass(frozen=True)
class Envelope:
    topic: str
    type_tag: str
    seq: int
    stamp: float
    payload: Any
    blob: bytes | None = None   # raw companion frame, not part of the JSON body


@dataclass(frozen=True)
class TopicDeclaration:
    topic: str
    type_tag: str
    direction: str  # OUTBOUND or INBOUND

    def __post_init__(self) -> None:
        _check_topic(self.topic)
        if self.direction not in (OUTBOUND, INBOUND):
            raise ValueError(f"direction must be outbound or inbound, got {self.direction!r}")


def _check_topic(topic: str) -> None:
    if not topic or any(c.isspace() for c in topic):
        raise TopicError(f"topic must be non-empty without whitespace, got {topic!r}")


def encode_frame(env: Envelope, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE) -> bytes:
    """Serialize one envelope to its length-prefixed canonical frame."""
    _check_topic(env.topic)
    try:
        body = json.dumps(
            {"topic": env.topic, "type": env.type_tag, "seq": env.seq,
             "stamp": env.stamp, "data": env.payload},
            separators=(",", ":"), allow_nan=False, ensure_ascii=False,
        ).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise CodecError(f"payload not representable as JSON: {exc}") from exc
    if len(body) > max_frame_size:
        raise FrameTooLargeError(f"body of {len(body)} bytes exceeds limit {max_frame_size}")
    return struct.pack(">I", len(body)) + body


def encode_blob_frame(blob: bytes, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE) -> bytes:
    """Length-prefix a raw binary frame (follows a binary-tagged envelope)."""
    if len(blob) > max_frame_size:
        raise FrameTooLargeError(f"blob of {len(blob)} bytes exceeds limit {max_frame_size}")
    return struct.pack(">I", len(blob)) + blob


_REQUIRED_FIELDS = ("topic", "type", "seq", "stamp", "data")


def decode_frame(buf: bytes, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE,
                 ) -> tuple[Envelope | None, bytes]:
    """Consume exactly one envelope frame from the front of `buf`.

    Returns (None, buf) untouched while fewer bytes than one whole frame
    are available ("incomplete" is not an error). Raises a distinct error
    kind for an oversized prefix, invalid UTF-8, invalid JSON, and missing
    required fields.
    """
    if len(buf) < 4:
        return None, buf
    (length,) = struct.unpack(">I", buf[:4])
    if length > max_frame_size:
        raise FrameTooLargeError(f"prefix claims {length} bytes, limit is {max_frame_size}")
    if len(buf) < 4 + length:
        return None, buf
    body = buf[4:4 + length]
    rest = buf[4 + length:]
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FrameEncodingError(f"frame body is not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FrameJsonError(f"frame body is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FrameJsonError("frame body must be a JSON object")
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise MissingFieldError(f"envelope missing required field {name!r}")
    env = Envelope(topic=obj["topic"], type_tag=obj["type"], seq=obj["seq"],
                   stamp=obj["stamp"], payload=obj["data"])
    return env, rest


def split_blob_frame(buf: bytes, nbytes: int) -> tuple[bytes | None, bytes]:
    """Consume one raw frame of exactly `nbytes` body bytes, if available."""
    if len(buf) < 4:
        return None, buf
    (length,) = struct.unpack(">I", buf[:4])
    if length != nbytes:
        raise FrameJsonError(f"binary frame length {length} does not match announced {nbytes}")
    if len(buf) < 4 + length:
        return None, buf
    return bytes(buf[4:4 + length]), buf[4 + length:]


# ---------------------------------------------------------------------------
# codecs

@dataclass(frozen=True)
class Codec:
    """Typed payload converter. deserialize(serialize(v)) must equal v."""

    type_tag: str
    serialize: Callable[[Any], Any]
    deserialize: Callable[[Any], Any]
    binary: bool = False   # envelope is followed by one raw frame


class CodecRegistry:
    def __init__(self) -> None:
        self._codecs: dict[str, Codec] = {}

    def register(self, codec: Codec) -> None:
        if codec.type_tag in self._codecs:
            raise CodecError(f"type tag {codec.type_tag!r} already registered")
        self._codecs[codec.type_tag] = codec

    def get(self, type_tag: str) -> Codec:
        try:
            return self._codecs[type_tag]
        except KeyError:
            raise CodecError(f"no codec registered for type tag {type_tag!r}") from None

    def has(self, type_tag: str) -> bool:
        return type_tag in self._codecs

    def is_binary(self, type_tag: str) -> bool:
        codec = self._codecs.get(type_tag)
        return codec.binary if codec else False


def register_codec(registry: CodecRegistry, codec: Codec) -> None:
    registry.register(codec)


def _require(payload: dict, name: str, tag: str) -> Any:
    if not isinstance(payload, dict) or name not in payload:
        raise CodecError(f"{tag} payload missing field {name!r}")
    return payload[name]


def _driver_inputs_codec() -> Codec:
    from .vehicle import DriverInputs

    def ser(v: Any) -> Any:
        return {"throttle": v.throttle, "braking": v.braking, "steering": v.steering}

    def deser(p: Any) -> Any:
        return DriverInputs(throttle=_require(p, "throttle", "driver_inputs"),
                            braking=_require(p, "braking", "driver_inputs"),
                            steering=_require(p, "steering", "driver_inputs"))

    return Codec("driver_inputs", ser, deser)


def _vehicle_state_codec() -> Codec:
    from .vehicle import VehicleState

    def ser(v: Any) -> Any:
        return {"x": v.x, "y": v.y, "heading": v.heading, "speed": v.speed,
                "steer_angle": v.steer_angle, "time": v.time}

    def deser(p: Any) -> Any:
        return VehicleState(x=_require(p, "x", "vehicle_state"),
                            y=_require(p, "y", "vehicle_state"),
                            heading=_require(p, "heading", "vehicle_state"),
                            speed=_require(p, "speed", "vehicle_state"),
                            steer_angle=_require(p, "steer_angle", "vehicle_state"),
                            time=_require(p, "time", "vehicle_state"))

    return Codec("vehicle_state", ser, deser)


def _detections_codec() -> Codec:
    from .autonomy import Detection
    from .sensors import BBox

    def ser(dets: Any) -> Any:
        out = []
        for d in dets:
            rec = {"bbox": [d.bbox.u_min, d.bbox.v_min, d.bbox.u_max, d.bbox.v_max],
                   "label": d.label, "confidence": d.confidence,
                   "position": list(d.position) if d.position is not None else None}
            out.append(rec)
        return out

    def deser(p: Any) -> Any:
        if not isinstance(p, list):
            raise CodecError("detections payload must be a list")
        dets = []
        for rec in p:
            bbox = _require(rec, "bbox", "detections")
            pos = _require(rec, "position", "detections")
            dets.append(Detection(
                bbox=BBox(*bbox),
                label=_require(rec, "label", "detections"),
                confidence=_require(rec, "confidence", "detections"),
                position=tuple(pos) if pos is not None else None,
            ))
        return dets

    return Codec("detections", ser, deser)


def _lidar_scan_codec() -> Codec:
    from .sensors import LidarScan

    def ser(v: Any) -> Any:
        return {"angle_min": v.angle_min, "angle_max": v.angle_max,
                "n_beams": v.n_beams, "ranges": list(v.ranges),
                "max_range": v.max_range}

    def deser(p: Any) -> Any:
        return LidarScan(angle_min=_require(p, "angle_min", "lidar_scan"),
                         angle_max=_require(p, "angle_max", "lidar_scan"),
                         n_beams=_require(p, "n_beams", "lidar_scan"),
                         ranges=tuple(_require(p, "ranges", "lidar_scan")),
                         max_range=_require(p, "max_range", "lidar_scan"))

    return Codec("lidar_scan", ser, deser)


def _imu_codec() -> Codec:
    from .sensors import ImuSample

    def ser(v: Any) -> Any:
        return {"accel": list(v.accel), "gyro_z": v.gyro_z,
                "noise_sigma_accel": v.noise_sigma_accel,
                "noise_sigma_gyro": v.noise_sigma_gyro}

    def deser(p: Any) -> Any:
        return ImuSample(accel=tuple(_require(p, "accel", "imu")),
                         gyro_z=_require(p, "gyro_z", "imu"),
                         noise_sigma_accel=_require(p, "noise_sigma_accel", "imu"),
                         noise_sigma_gyro=_require(p, "noise_sigma_gyro", "imu"))

    return Codec("imu", ser, deser)


def _mocap_pose_codec() -> Codec:
    from .sensors import MocapPose

    def ser(v: Any) -> Any:
        return {"x": v.x, "y": v.y, "heading": v.heading,
                "sigma_position": v.sigma_position}

    def deser(p: Any) -> Any:
        return MocapPose(x=_require(p, "x", "mocap_pose"),
                         y=_require(p, "y", "mocap_pose"),
                         heading=_require(p, "heading", "mocap_pose"),
                         sigma_position=_require(p, "sigma_position", "mocap_pose"))

    return Codec("mocap_pose", ser, deser)


def _image_meta_codec() -> Codec:
    def ser(v: Any) -> Any:
        for name in ("width", "height", "channels", "nbytes"):
            _require(v, name, "image_meta")
        return dict(v)

    def deser(p: Any) -> Any:
        for name in ("width", "height", "channels", "nbytes"):
            _require(p, name, "image_meta")
        return dict(p)

    return Codec("image_meta", ser, deser, binary=True)


def default_registry() -> CodecRegistry:
    """Registry preloaded with the built-in type tags."""
    reg = CodecRegistry()
    for factory in (_driver_inputs_codec, _vehicle_state_codec, _detections_codec,
                    _lidar_scan_codec, _imu_codec, _mocap_pose_codec,
                    _image_meta_codec):
        reg.register(factory())
    return reg


# ---------------------------------------------------------------------------
# negotiation

@dataclass
class Negotiation:
    """Outcome of declaration matching for one endpoint."""

    outbound_matched: set[str] = field(default_factory=set)
    inbound_matched: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)


def negotiate(mine: list[TopicDeclaration],
              theirs: list[TopicDeclaration]) -> Negotiation:
    """Pair local declarations against the peer's.

    Every local outbound pairs with a remote inbound of identical topic and
    type tag (and symmetrically for local inbound). Same topic with a
    different type tag is an error; topics only one side knows are
    warnings.
    """
    seen: set[tuple[str, str]] = set()
    for d in mine:
        key = (d.topic, d.direction)
        if key in seen:
            raise HandshakeError(f"duplicate declaration for {key}")
        seen.add(key)

    theirs_by_key = {(d.topic, d.direction): d for d in theirs}
    result = Negotiation()
    for d in mine:
        opposite = INBOUND if d.direction == OUTBOUND else OUTBOUND
        peer = theirs_by_key.get((d.topic, opposite))
        if peer is None:
            result.warnings.append(f"topic {d.topic!r} ({d.direction}) unmatched by peer")
            continue
        if peer.type_tag != d.type_tag:
            raise TypeTagConflictError(
                f"topic {d.topic!r}: local type {d.type_tag!r} vs peer type {peer.type_tag!r}")
        if d.direction == OUTBOUND:
            result.outbound_matched.add(d.topic)
        else:
            result.inbound_matched.add(d.topic)
    return result


# ---------------------------------------------------------------------------
# transports

class LoopbackTransport:
    """One end of an in-memory bidirectional byte queue.

    `chunk_size` splits outgoing writes so receivers must reassemble frames
    across arbitrary boundaries, which is what the TCP path does anyway.
    """

    def __init__(self) -> None:
        self._inbox: deque[bytes] = deque()
        self._peer: LoopbackTransport | None = None
        self._chunk_size: int | None = None
        self.closed = False

    @staticmethod
    def create_pair(chunk_size: int | None = None,
                    ) -> tuple["LoopbackTransport", "LoopbackTransport"]:
        a, b = LoopbackTransport(), LoopbackTransport()
        a._peer, b._peer = b, a
        a._chunk_size = b._chunk_size = chunk_size
        return a, b

    def send(self, data: bytes) -> None:
        if self.closed or self._peer is None or self._peer.closed:
            raise TransportClosedError("loopback peer is closed")
        if self._chunk_size is None:
            self._peer._inbox.append(bytes(data))
        else:
            for i in range(0, len(data), self._chunk_size):
                self._peer._inbox.append(bytes(data[i:i + self._chunk_size]))

    def recv(self, timeout: float | None = 0.0) -> bytes:
        # in-memory: whatever has been sent is already here, so timeouts
        # never wait
        if self._inbox:
            return self._inbox.popleft()
        if self.closed or self._peer is None or self._peer.closed:
            raise TransportClosedError("loopback peer is closed")
        return b""

    def close(self) -> None:
        self.closed = True


class TcpTransport:
    """Plain stream socket transport (no TLS, no reconnection)."""

    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.closed = False
        self._peer_eof = False

    def send(self, data: bytes) -> None:
        if self.closed:
            raise TransportClosedError("socket already closed")
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportClosedError(f"socket send failed: {exc}") from exc

    def recv(self, timeout: float | None = 0.0) -> bytes:
        """Return whatever bytes are available within `timeout` seconds.

        Returns b'' on timeout with the connection open; raises
        TransportClosedError once the peer has shut down and nothing more
        will arrive.
        """
        if self.closed:
            raise TransportClosedError("socket already closed")
        if self._peer_eof:
            raise TransportClosedError("peer closed the connection")
        self._sock.settimeout(timeout if timeout and timeout > 0 else 0.0)
        try:
            data = self._sock.recv(65536)
        except (BlockingIOError, socket.timeout, InterruptedError):
            return b""
        except OSError as exc:
            raise TransportClosedError(f"socket recv failed: {exc}") from exc
        if data == b"":
            self._peer_eof = True
            raise TransportClosedError("peer closed the connection")
        return data

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> tuple[socket.socket, int]:
    """Bound, listening server socket; returns it with the actual port."""
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    return srv, srv.getsockname()[1]


def tcp_accept(server: socket.socket, timeout: float = 10.0) -> TcpTransport:
    server.settimeout(timeout)
    conn, _ = server.accept()
    return TcpTransport(conn)


def tcp_connect(host: str, port: int, timeout: float = 10.0) -> TcpTransport:
    sock = socket.create_connection((host, port), timeout=timeout)
    return TcpTransport(sock)


# ---------------------------------------------------------------------------
# endpoint

class Endpoint:
    """One side of a bridge connection.

    Owns the transport, the declared topics and the codec registry; framed
    publish/poll with per-topic sequence numbers. An endpoint belongs to
    one logical execution context at a time.
    """

    def __init__(self, transport, declarations: list[TopicDeclaration],
                 registry: CodecRegistry | None = None,
                 max_frame_size: int = DEFAULT_MAX_FRAME_SIZE) -> None:
        self.transport = transport
        self.declarations = list(declarations)
        self.registry = registry if registry is not None else default_registry()
        self.max_frame_size = max_frame_size
        self.negotiation: Negotiation | None = None
        self.dropped_undeclared = 0
        self._buf = bytearray()
        self._ready: deque[Envelope] = deque()
        self._next_seq: dict[str, int] = {}
        self._pending_blob: Envelope | None = None
        self._out_by_topic = {d.topic: d for d in declarations if d.direction == OUTBOUND}
        self._in_by_topic = {d.topic: d for d in declarations if d.direction == INBOUND}
        self._handshake_sent = False
        self._peer_declarations: list[TopicDeclaration] | None = None

    # -- handshake ---------------------------------------------------------

    def start_handshake(self) -> None:
        """Send this side's declaration list; must be the first frame out."""
        if self._handshake_sent:
            return
        payload = {"declarations": [
            {"topic": d.topic, "type": d.type_tag, "direction": d.direction}
            for d in self.declarations]}
        env = Envelope(topic=HANDSHAKE_TOPIC, type_tag=HANDSHAKE_TOPIC,
                       seq=0, stamp=0.0, payload=payload)
        self.transport.send(encode_frame(env, self.max_frame_size))
        self._handshake_sent = True

    def finish_handshake(self, timeout: float = 10.0) -> Negotiation:
        """Receive the peer's handshake (must be its first frame) and pair."""
        if self.negotiation is not None:
            return self.negotiation
        self.start_handshake()
        deadline = _now() + timeout
        while self._peer_declarations is None:
            env = self._next_envelope(block_until=deadline)
            if env is None:
                raise HandshakeError("timed out waiting for peer handshake")
            if env.topic != HANDSHAKE_TOPIC:
                raise HandshakeError(f"first frame must be a handshake, got topic {env.topic!r}")
            decls = []
            for rec in _require(env.payload, "declarations", "handshake"):
                decls.append(TopicDeclaration(topic=rec["topic"], type_tag=rec["type"],
                                              direction=rec["direction"]))
            self._peer_declarations = decls
        self.negotiation = negotiate(self.declarations, self._peer_declarations)
        return self.negotiation

    def handshake(self, timeout: float = 10.0) -> Negotiation:
        self.start_handshake()
        return self.finish_handshake(timeout)

    # -- publish -----------------------------------------------------------

    def _prepare(self, topic: str) -> TopicDeclaration:
        if self.negotiation is None:
            raise HandshakeError("handshake not completed")
        decl = self._out_by_topic.get(topic)
        if decl is None:
            raise TopicError(f"topic {topic!r} not declared outbound")
        if topic not in self.negotiation.outbound_matched:
            raise TopicError(f"topic {topic!r} unmatched by peer")
        return decl

    def publish(self, topic: str, stamp: float, payload: Any,
                blob: bytes | None = None) -> Envelope:
        """Publish a raw JSON payload on a declared, matched topic."""
        decl = self._prepare(topic)
        if self.registry.is_binary(decl.type_tag) != (blob is not None):
            raise CodecError(f"type {decl.type_tag!r} "
                             f"{'requires' if self.registry.is_binary(decl.type_tag) else 'does not take'} a blob")
        if blob is not None:
            announced = payload.get("nbytes") if isinstance(payload, dict) else None
            if announced != len(blob):
                raise CodecError(f"payload must announce nbytes={len(blob)}, got {announced!r}")
        seq = self._next_seq.get(topic, 0)
        env = Envelope(topic=topic, type_tag=decl.type_tag, seq=seq,
                       stamp=stamp, payload=payload, blob=blob)
        data = encode_frame(env, self.max_frame_size)
        if blob is not None:
            data += encode_blob_frame(blob, self.max_frame_size)
        self.transport.send(data)
        self._next_seq[topic] = seq + 1
        return env

    def publish_value(self, topic: str, stamp: float, value: Any,
                      blob: bytes | None = None) -> Envelope:
        """Publish a domain value through the codec for the topic's type tag."""
        decl = self._prepare(topic)
        codec = self.registry.get(decl.type_tag)
        return self.publish(topic, stamp, codec.serialize(value), blob=blob)

    def decode_value(self, env: Envelope) -> Any:
        """Deserialize an envelope's payload through its type tag's codec."""
        return self.registry.get(env.type_tag).deserialize(env.payload)

    # -- receive -----------------------------------------------------------

    def _feed(self, data: bytes) -> None:
        self._buf.extend(data)
        while True:
            if self._pending_blob is not None:
                nbytes = int(self._pending_blob.payload["nbytes"])
                blob, rest = split_blob_frame(bytes(self._buf), nbytes)
                if blob is None:
                    return
                env = Envelope(topic=self._pending_blob.topic,
                               type_tag=self._pending_blob.type_tag,
                               seq=self._pending_blob.seq,
                               stamp=self._pending_blob.stamp,
                               payload=self._pending_blob.payload,
                               blob=blob)
                self._pending_blob = None
                self._buf = bytearray(rest)
                self._admit(env)
                continue
            env, rest = decode_frame(bytes(self._buf), self.max_frame_size)
            if env is None:
                return
            self._buf = bytearray(rest)
            if env.topic != HANDSHAKE_TOPIC and self.registry.is_binary(env.type_tag):
                if not isinstance(env.payload, dict) or not isinstance(env.payload.get("nbytes"), int):
                    raise CodecError(f"binary-tagged envelope on {env.topic!r} must announce integer nbytes")
                self._pending_blob = env
                continue
            self._admit(env)

    def _admit(self, env: Envelope) -> None:
        if env.topic == HANDSHAKE_TOPIC:
            self._ready.append(env)
            return
        if env.topic not in self._in_by_topic:
            self.dropped_undeclared += 1
            return
        self._ready.append(env)

    def _next_envelope(self, block_until: float | None = None) -> Envelope | None:
        while True:
            if self._ready:
                return self._ready.popleft()
            if block_until is None:
                timeout = 0.0
            else:
                timeout = block_until - _now()
                if timeout <= 0.0:
                    return None
            data = self.transport.recv(timeout=min(timeout, 0.25))
            if data:
                self._feed(data)
                continue
            if block_until is None:
                return None
            if isinstance(self.transport, LoopbackTransport):
                _sleep(0.0005)  # loopback never blocks in recv

    def poll(self, budget: int) -> list[Envelope]:
        """Drain up to `budget` buffered envelopes without blocking.

        Arrival order is preserved. A transport failure surfaces only after
        everything already buffered has been handed out.
        """
        if budget < 1:
            raise ValueError("budget must be >= 1")
        out: list[Envelope] = []
        while len(out) < budget:
            if self._ready:
                out.append(self._ready.popleft())
                continue
            try:
                data = self.transport.recv(timeout=0.0)
            except TransportClosedError:
                if out:
                    return out
                raise
            if not data:
                break
            self._feed(data)
        return out

    def poll_wait(self, budget: int, timeout: float) -> list[Envelope]:
        """Like poll, but waits up to `timeout` for the first envelope."""
        deadline = _now() + timeout
        out = self.poll(budget)
        if out:
            return out
        while True:
            remaining = deadline - _now()
            if remaining <= 0.0:
                return []
            data = self.transport.recv(timeout=min(remaining, 0.25))
            if data:
                self._feed(data)
                out = self.poll(budget)
                if out:
                    return out
            elif isinstance(self.transport, LoopbackTransport):
                _sleep(0.0005)

    def close(self) -> None:
        self.transport.close()


def _now() -> float:
    return time.monotonic()


def _sleep(seconds: float) -> None:
    time.sleep(seconds)
