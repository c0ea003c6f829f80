"""In-process message bus with a byte boundary and an append-only transcript.

Every message is serialized on send and deserialized before delivery, so
entities only ever see what survived the wire format.
"""

from __future__ import annotations

import json
import struct
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass, field

from ..counters import OpCounter
from .payloads import REGISTRY, Payload, digest

SCHEME_I = "I"
SCHEME_II = "II"

_P3 = [
    ("cloud", "owner", "secret_matrix"),
    ("cloud", "owner", "fingerprint_set"),
    ("owner", "judge", "arbitration_bundle"),
    ("judge", "owner", "verdict"),
]
_P2_REQUEST = [
    ("user", "cloud", "enc_fingerprint"),
    ("user", "cloud", "rekey_self"),
    ("user", "cloud", "rekey_judge"),
    ("owner", "cloud", "rekey_owner"),
]
_AUTH = [("user", "owner", "access_request"), ("owner", "user", "auth_token")]

# (sender role, recipient role, payload type) in scripted order
SCRIPTS: dict[tuple[str, str], list[tuple[str, str, str]]] = {
    (SCHEME_I, "part1"): [
        ("owner", "cloud", "encoding_matrix"),
        ("owner", "cloud", "enc_elut"),
        ("owner", "cloud", "session_keys"),
        ("owner", "cloud", "media_collection"),
    ],
    (SCHEME_I, "authorize"): _AUTH,
    (SCHEME_I, "part2"): _P2_REQUEST + [
        ("cloud", "user", "enc_dlut"),
        ("cloud", "user", "media"),
        ("cloud", "user", "session_key"),
    ],
    (SCHEME_I, "part3"): _P3,
    (SCHEME_II, "part1"): [
        ("owner", "cloud", "encoding_matrix"),
        ("owner", "cloud", "enc_elut"),
        ("owner", "cloud", "session_keys"),
        ("owner", "cloud", "enc_media_collection"),
    ],
    (SCHEME_II, "authorize"): _AUTH,
    (SCHEME_II, "part2"): _P2_REQUEST + [("cloud", "user", "enc_media_response")],
    (SCHEME_II, "part3"): _P3,
}


class ProtocolError(Exception):
    pass


class AuthorizationError(ProtocolError):
    pass


@dataclass(frozen=True)
class Envelope:
    scheme: str
    part: str
    step: int
    sender: str  # role
    sender_id: str
    recipient: str
    recipient_id: str
    session: str
    payload_type: str


@dataclass
class Message:
    envelope: Envelope
    payload: Payload


def encode_message(msg: Message) -> bytes:
    meta, blobs = msg.payload.encode()
    head = {"envelope": asdict(msg.envelope), "meta": meta, "blobs": [len(b) for b in blobs]}
    hb = json.dumps(head, sort_keys=True).encode()
    return struct.pack("<I", len(hb)) + hb + b"".join(blobs)


def decode_message(data: bytes) -> Message:
    (n,) = struct.unpack_from("<I", data)
    head = json.loads(data[4 : 4 + n])
    env = Envelope(**head["envelope"])
    blobs, off = [], 4 + n
    for size in head["blobs"]:
        blobs.append(data[off : off + size])
        off += size
    cls = REGISTRY.get(env.payload_type)
    if cls is None:
        raise ProtocolError(f"unknown payload type {env.payload_type!r}")
    return Message(env, cls.decode(head["meta"], blobs))


@dataclass
class Record:
    """One transcript line: a delivered message or a cloud-side derivation."""

    kind: str  # "message" | "derive"
    session: str
    scheme: str
    part: str
    step: int
    sender: str
    sender_id: str
    recipient: str
    recipient_id: str
    payload_type: str
    payload_digest: str
    size: int = 0
    encrypted: bool = False
    key_ids: list = field(default_factory=list)
    refs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Record":
        return cls(**json.loads(line))


class Transcript:
    def __init__(self, records: list[Record] | None = None):
        self._records: list[Record] = list(records or [])
        self._lock = threading.Lock()

    def append(self, rec: Record) -> None:
        with self._lock:
            self._records.append(rec)

    @property
    def records(self) -> list[Record]:
        return list(self._records)

    def messages(self, scheme=None, part=None, session=None) -> list[Record]:
        return [
            r for r in self._records
            if r.kind == "message"
            and (scheme is None or r.scheme == scheme)
            and (part is None or r.part == part)
            and (session is None or r.session == session)
        ]

    def __len__(self):
        return len(self._records)

    def dumps(self) -> str:
        return "".join(r.to_json() + "\n" for r in self._records)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        return cls([Record.from_json(l) for l in text.splitlines() if l.strip()])


def script_of(records: list[Record]) -> list[tuple[str, str, str]]:
    return [(r.sender, r.recipient, r.payload_type) for r in records if r.kind == "message"]


class Network:
    """Delivers messages between named entities and records everything."""

    def __init__(self):
        self.transcript = Transcript()
        # public bulletin: media id -> secret matrix digest, written at storage time
        self.bulletin: dict[str, str] = {}
        # public key directory: entity id -> public key
        self.directory: dict = {}
        self._inbox: dict[str, list[Message]] = defaultdict(list)
        self._counters: dict[str, OpCounter] = {}
        self._lock = threading.Lock()
        self._sessions = 0

    def attach(self, entity_id: str, counter: OpCounter) -> None:
        self._counters[entity_id] = counter

    def new_session(self, scheme: str, part: str) -> str:
        with self._lock:
            self._sessions += 1
            return f"{scheme}-{part}-{self._sessions:04d}"

    def send(self, scheme, part, session, sender: tuple[str, str], recipient: tuple[str, str], payload: Payload, step: int | None = None):
        if step is None:
            key = (sender[0], recipient[0], payload.TYPE)
            script = SCRIPTS.get((scheme, part), [])
            step = script.index(key) + 1 if key in script else 0
        env = Envelope(scheme, part, step, sender[0], sender[1], recipient[0], recipient[1], session, payload.TYPE)
        data = encode_message(Message(env, payload))
        c = self._counters.get(sender[1])
        if c is not None:
            c.add("messages_sent")
            c.add("bytes_sent", len(data))
        self.transcript.append(Record(
            "message", session, scheme, part, step, env.sender, env.sender_id, env.recipient,
            env.recipient_id, payload.TYPE, digest(data), len(data), payload.ENCRYPTED,
            payload.key_ids(), payload.refs(),
        ))
        delivered = decode_message(data)
        with self._lock:
            self._inbox[recipient[1]].append(delivered)

    def record_derivation(self, scheme, part, session, actor: tuple[str, str], output_type: str, output: bytes, refs: dict):
        self.transcript.append(Record(
            "derive", session, scheme, part, 0, actor[0], actor[1], "", "", output_type,
            digest(output), len(output), True, [], refs,
        ))

    def take(self, entity_id: str, payload_type: str, match=None) -> Message:
        """Pop the oldest message of ``payload_type`` addressed to the entity."""
        with self._lock:
            box = self._inbox[entity_id]
            for i, msg in enumerate(box):
                if msg.envelope.payload_type == payload_type and (match is None or match(msg.payload)):
                    return box.pop(i)
        raise ProtocolError(f"{entity_id}: no pending {payload_type!r} message")

    def pending(self, entity_id: str) -> list[Message]:
        with self._lock:
            return list(self._inbox[entity_id])
