"""Typed message payloads and their byte encoding.

Every payload encodes to a JSON metadata object plus a list of binary blobs.
``CARRIES`` names the user-secret quantities a payload type can hold
(fingerprint bits, a D-LUT, a fingerprinted copy), and ``ENCRYPTED`` says
whether those are under PRE encryption; the transcript audit relies on both.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .. import lut, pre
from ..afp_cipher import CtVector, EncDLut, EncELut, EncFingerprint, EncMedia

FINGERPRINT = "fingerprint"
DLUT = "dlut"
MARKED_MEDIA = "marked_media"

REGISTRY: dict[str, type] = {}


def payload(cls):
    REGISTRY[cls.TYPE] = cls
    return cls


class Payload:
    TYPE = ""
    CARRIES: frozenset = frozenset()
    ENCRYPTED = False

    def encode(self) -> tuple[dict, list[bytes]]:
        raise NotImplementedError

    @classmethod
    def decode(cls, meta: dict, blobs: list[bytes]):
        raise NotImplementedError

    def key_ids(self) -> list[str]:
        """Key ids of any PRE ciphertexts inside, hex encoded."""
        return []

    def refs(self) -> dict:
        """Extra digests recorded in the transcript for provenance checks."""
        return {}


def _vec_keys(*vecs: CtVector) -> list[str]:
    return sorted({v.key_id.hex() for v in vecs if len(v)})


# -- Part 1 -----------------------------------------------------------------

@payload
@dataclass
class EncodingMatrixMsg(Payload):
    g: lut.EncodingMatrix
    TYPE = "encoding_matrix"

    def encode(self):
        return {}, [lut.to_bytes(self.g)]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(lut.from_bytes(blobs[0]))


@payload
@dataclass
class EncELutMsg(Payload):
    """Second-level E-LUT under the owner key plus the unit anchor ``E(1)``."""

    enc_e: EncELut
    one: pre.Ciphertext2
    TYPE = "enc_elut"

    def encode(self):
        return {}, [self.enc_e.to_bytes(), self.one.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(EncELut.from_bytes(blobs[0]), pre.Ciphertext2.from_bytes(blobs[1]))

    def key_ids(self):
        return sorted(set(_vec_keys(self.enc_e)) | {self.one.key_id.hex()})


@dataclass
class SessionKey:
    media_id: str
    sk_m: bytes
    M: int
    S: int
    T: int

    def table(self) -> lut.IndexTable:
        return lut.gen_index_table(self.sk_m, self.M, self.S, self.T)

    def as_meta(self) -> dict:
        return {"media_id": self.media_id, "sk_m": self.sk_m.hex(), "M": self.M, "S": self.S, "T": self.T}

    @classmethod
    def from_meta(cls, d: dict) -> "SessionKey":
        return cls(d["media_id"], bytes.fromhex(d["sk_m"]), d["M"], d["S"], d["T"])


@payload
@dataclass
class SessionKeysMsg(Payload):
    keys: list[SessionKey]
    TYPE = "session_keys"

    def encode(self):
        return {"keys": [k.as_meta() for k in self.keys]}, []

    @classmethod
    def decode(cls, meta, blobs):
        return cls([SessionKey.from_meta(d) for d in meta["keys"]])


@payload
@dataclass
class MediaCollectionMsg(Payload):
    """LUT-masked media ``{c}``."""

    items: dict[str, lut.MediaVector]
    TYPE = "media_collection"

    def encode(self):
        ids = list(self.items)
        return {"ids": ids}, [lut.to_bytes(self.items[i]) for i in ids]

    @classmethod
    def decode(cls, meta, blobs):
        return cls({i: lut.from_bytes(b) for i, b in zip(meta["ids"], blobs)})


@payload
@dataclass
class EncMediaCollectionMsg(Payload):
    items: dict[str, EncMedia]
    TYPE = "enc_media_collection"
    ENCRYPTED = True

    def encode(self):
        ids = list(self.items)
        return {"ids": ids}, [self.items[i].to_bytes() for i in ids]

    @classmethod
    def decode(cls, meta, blobs):
        return cls({i: EncMedia.from_bytes(b) for i, b in zip(meta["ids"], blobs)})

    def key_ids(self):
        return _vec_keys(*self.items.values())


# -- authorization ----------------------------------------------------------

@payload
@dataclass
class AccessRequestMsg(Payload):
    user_id: str
    media_id: str
    pk: pre.PublicKey
    TYPE = "access_request"

    def encode(self):
        return {"user_id": self.user_id, "media_id": self.media_id}, [self.pk.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], meta["media_id"], pre.PublicKey.from_bytes(blobs[0]))


@payload
@dataclass
class AuthTokenMsg(Payload):
    user_id: str
    media_id: str
    token: bytes
    TYPE = "auth_token"

    def encode(self):
        return {"user_id": self.user_id, "media_id": self.media_id}, [self.token]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], meta["media_id"], blobs[0])


# -- Part 2 -----------------------------------------------------------------

@payload
@dataclass
class EncFingerprintMsg(Payload):
    """The user's request: encrypted fingerprint, public key and token."""

    user_id: str
    media_id: str
    token: bytes
    pk: pre.PublicKey
    enc_b: EncFingerprint
    TYPE = "enc_fingerprint"
    CARRIES = frozenset({FINGERPRINT})
    ENCRYPTED = True

    def encode(self):
        meta = {"user_id": self.user_id, "media_id": self.media_id}
        return meta, [self.token, self.pk.to_bytes(), self.enc_b.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(
            meta["user_id"], meta["media_id"], blobs[0], pre.PublicKey.from_bytes(blobs[1]),
            EncFingerprint.from_bytes(blobs[2]),
        )

    def key_ids(self):
        return _vec_keys(self.enc_b)

    def refs(self):
        return {"enc_b": digest(self.enc_b.to_bytes()), "user_id": self.user_id}


@dataclass
class _ReKeyBase(Payload):
    user_id: str
    media_id: str
    rk: pre.ReEncryptionKey
    token_digest: str = ""

    def encode(self):
        meta = {"user_id": self.user_id, "media_id": self.media_id, "token_digest": self.token_digest}
        return meta, [self.rk.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], meta["media_id"], pre.ReEncryptionKey.from_bytes(blobs[0]), meta["token_digest"])

    def refs(self):
        return {"delegator": self.rk.delegator.hex(), "delegatee": self.rk.delegatee.hex()}


@payload
class ReKeySelfMsg(_ReKeyBase):
    TYPE = "rekey_self"


@payload
class ReKeyJudgeMsg(_ReKeyBase):
    TYPE = "rekey_judge"


@payload
class ReKeyOwnerMsg(_ReKeyBase):
    TYPE = "rekey_owner"


@payload
@dataclass
class EncDLutMsg(Payload):
    user_id: str
    enc_d: EncDLut
    TYPE = "enc_dlut"
    CARRIES = frozenset({DLUT})
    ENCRYPTED = True

    def encode(self):
        return {"user_id": self.user_id}, [self.enc_d.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], EncDLut.from_bytes(blobs[0]))

    def key_ids(self):
        return _vec_keys(self.enc_d)


@payload
@dataclass
class MediaMsg(Payload):
    media_id: str
    c: lut.MediaVector
    TYPE = "media"

    def encode(self):
        return {"media_id": self.media_id}, [lut.to_bytes(self.c)]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["media_id"], lut.from_bytes(blobs[0]))


@payload
@dataclass
class SessionKeyMsg(Payload):
    key: SessionKey
    TYPE = "session_key"

    def encode(self):
        return self.key.as_meta(), []

    @classmethod
    def decode(cls, meta, blobs):
        return cls(SessionKey.from_meta(meta))


@payload
@dataclass
class EncMediaResponseMsg(Payload):
    media_id: str
    enc: EncMedia
    TYPE = "enc_media_response"
    CARRIES = frozenset({MARKED_MEDIA})
    ENCRYPTED = True

    def encode(self):
        return {"media_id": self.media_id}, [self.enc.to_bytes()]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["media_id"], EncMedia.from_bytes(blobs[0]))

    def key_ids(self):
        return _vec_keys(self.enc)


# -- Part 3 -----------------------------------------------------------------

@payload
@dataclass
class SecretMatrixMsg(Payload):
    media_id: str
    gbar: lut.SecretMatrix
    TYPE = "secret_matrix"

    def encode(self):
        v = lut.EncodingMatrix(self.gbar.values, self.gbar.frac_bits)
        return {"media_id": self.media_id}, [lut.to_bytes(v)]

    @classmethod
    def decode(cls, meta, blobs):
        v = lut.from_bytes(blobs[0])
        return cls(meta["media_id"], lut.SecretMatrix(v.values, v.frac_bits))


@payload
@dataclass
class FingerprintSetMsg(Payload):
    """The set F: per user, first-level fingerprints under the judge key."""

    entries: dict[str, EncFingerprint]
    TYPE = "fingerprint_set"
    CARRIES = frozenset({FINGERPRINT})
    ENCRYPTED = True

    def encode(self):
        ids = sorted(self.entries)
        return {"ids": ids}, [self.entries[i].to_bytes() for i in ids]

    @classmethod
    def decode(cls, meta, blobs):
        return cls({i: EncFingerprint.from_bytes(b) for i, b in zip(meta["ids"], blobs)})

    def key_ids(self):
        return _vec_keys(*self.entries.values())


@payload
@dataclass
class ArbitrationBundleMsg(Payload):
    media_id: str
    original: lut.MediaVector
    suspect: lut.MediaVector
    gbar: lut.SecretMatrix
    fingerprints: dict[str, EncFingerprint]
    decoder: str = "mf"
    tau: int = 0
    TYPE = "arbitration_bundle"
    CARRIES = frozenset({FINGERPRINT})
    ENCRYPTED = True

    def encode(self):
        ids = sorted(self.fingerprints)
        meta = {"media_id": self.media_id, "ids": ids, "decoder": self.decoder, "tau": self.tau}
        g = lut.EncodingMatrix(self.gbar.values, self.gbar.frac_bits)
        blobs = [lut.to_bytes(self.original), lut.to_bytes(self.suspect), lut.to_bytes(g)]
        return meta, blobs + [self.fingerprints[i].to_bytes() for i in ids]

    @classmethod
    def decode(cls, meta, blobs):
        g = lut.from_bytes(blobs[2])
        fps = {i: EncFingerprint.from_bytes(b) for i, b in zip(meta["ids"], blobs[3:])}
        return cls(
            meta["media_id"], lut.from_bytes(blobs[0]), lut.from_bytes(blobs[1]),
            lut.SecretMatrix(g.values, g.frac_bits), fps, meta["decoder"], meta["tau"],
        )

    def key_ids(self):
        return _vec_keys(*self.fingerprints.values())


@payload
@dataclass
class VerdictMsg(Payload):
    media_id: str
    users: list[str]
    distances: dict[str, int] = field(default_factory=dict)
    ambiguous: bool = False
    TYPE = "verdict"

    def encode(self):
        return {
            "media_id": self.media_id, "users": self.users,
            "distances": self.distances, "ambiguous": self.ambiguous,
        }, []

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["media_id"], list(meta["users"]), dict(meta["distances"]), meta["ambiguous"])


# -- plaintext secret payloads: never part of an honest run ----------------

@payload
@dataclass
class PlainFingerprintMsg(Payload):
    user_id: str
    b: lut.Fingerprint
    TYPE = "plain_fingerprint"
    CARRIES = frozenset({FINGERPRINT})

    def encode(self):
        return {"user_id": self.user_id}, [lut.to_bytes(self.b)]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], lut.from_bytes(blobs[0]))


@payload
@dataclass
class PlainDLutMsg(Payload):
    user_id: str
    d: lut.DLut
    TYPE = "plain_dlut"
    CARRIES = frozenset({DLUT})

    def encode(self):
        return {"user_id": self.user_id}, [lut.to_bytes(self.d)]

    @classmethod
    def decode(cls, meta, blobs):
        return cls(meta["user_id"], lut.from_bytes(blobs[0]))


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
