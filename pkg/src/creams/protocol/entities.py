"""Owner, cloud, user and judge.

Each entity owns its secrets, talks to the others only through a
:class:`~creams.protocol.network.Network`, and records its own operation costs
in an :class:`~creams.counters.OpCounter`.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass, field

import numpy as np

from .. import afp_cipher as afp
from .. import lut, pre
from ..counters import OpCounter
from . import payloads as P
from .network import SCHEME_I, SCHEME_II, AuthorizationError, Network, ProtocolError


class UnknownMediaError(ProtocolError):
    pass


class Entity:
    role = ""

    def __init__(self, entity_id: str, params: pre.PublicParams, net: Network, rng=None, keys: pre.KeyPair | None = None):
        self.id = entity_id
        self.params = params
        self.net = net
        self.rng = rng or secrets.SystemRandom()
        self.keys = keys or pre.keygen(params, self.rng)
        self.counter = OpCounter(entity_id)
        net.attach(entity_id, self.counter)
        net.directory[entity_id] = self.keys.pk

    @property
    def address(self) -> tuple[str, str]:
        return (self.role, self.id)

    def send(self, scheme, part, session, to: "Entity | tuple[str, str]", payload: P.Payload):
        addr = to.address if isinstance(to, Entity) else to
        self.net.send(scheme, part, session, self.address, addr, payload)

    def take(self, payload_type: str, match=None):
        return self.net.take(self.id, payload_type, match).payload


def _token_digest(token: bytes) -> str:
    return hashlib.sha256(b"creams/token/" + token).hexdigest()


class Owner(Entity):
    role = "owner"
    cloud_id = "cloud"

    def __init__(self, entity_id, params, net, sys: lut.SystemParams, fp: lut.FpParams,
                 np_rng: np.random.Generator, rng=None, keys=None):
        super().__init__(entity_id, params, net, rng, keys)
        self.sys = sys
        self.fp = fp
        self.np_rng = np_rng
        self.e: lut.ELut | None = None
        self.g: lut.EncodingMatrix | None = None
        self.catalog: dict[str, lut.MediaVector] = {}
        self.session_keys: dict[str, P.SessionKey] = {}
        self.tokens: dict[tuple[str, str], bytes] = {}
        self.user_keys: dict[str, pre.PublicKey] = {}

    def generate_luts(self) -> None:
        self.e = lut.gen_elut(self.sys, self.fp, self.np_rng)
        self.g = lut.gen_encoding_matrix(self.sys, self.fp, self.np_rng)

    def store(self, scheme: str, session: str, catalog: dict[str, lut.MediaVector]) -> None:
        """Encrypt the catalog and upload it with the LUT material."""
        dup = sorted(set(catalog) & set(self.catalog))
        if dup:
            raise ProtocolError(f"duplicate media id(s): {', '.join(dup)}")
        if self.e is None:
            self.generate_luts()
        with self.counter.active():
            keys = []
            for mid, m in catalog.items():
                keys.append(P.SessionKey(mid, self.rng.randbytes(16), len(m), self.sys.S, self.sys.T))
            enc_e = afp.enc_elut(self.params, self.keys.pk, self.e, self.rng)
            one = afp.enc_one(self.params, self.keys.pk, self.rng)
            if scheme == SCHEME_I:
                media = P.MediaCollectionMsg({
                    k.media_id: lut.encrypt_media(catalog[k.media_id], k.table(), self.e, self.fp) for k in keys
                })
            else:
                media = P.EncMediaCollectionMsg({
                    mid: afp.enc_media(self.params, self.keys.pk, m, self.rng) for mid, m in catalog.items()
                })
        part = "part1"
        self.send(scheme, part, session, ("cloud", self.cloud_id), P.EncodingMatrixMsg(self.g))
        self.send(scheme, part, session, ("cloud", self.cloud_id), P.EncELutMsg(enc_e, one))
        self.send(scheme, part, session, ("cloud", self.cloud_id), P.SessionKeysMsg(keys))
        self.send(scheme, part, session, ("cloud", self.cloud_id), media)
        self.catalog.update(catalog)
        self.session_keys.update({k.media_id: k for k in keys})

    def grant(self, scheme: str, session: str) -> None:
        req = self.take("access_request")
        if req.media_id not in self.catalog:
            raise UnknownMediaError(f"unknown media id {req.media_id!r}")
        token = self.rng.randbytes(16)
        self.tokens[(req.user_id, req.media_id)] = token
        self.user_keys[req.user_id] = req.pk
        self.send(scheme, "authorize", session, ("user", req.user_id), P.AuthTokenMsg(req.user_id, req.media_id, token))

    def delegate(self, scheme: str, session: str, user_id: str, media_id: str) -> None:
        """The owner's whole Part-2 contribution: one re-encryption key."""
        token = self.tokens.get((user_id, media_id))
        if token is None:
            raise AuthorizationError(f"user {user_id!r} is not authorized for {media_id!r}")
        with self.counter.active():
            rk = pre.rekey(self.keys.sk, self.keys.pk, self.user_keys[user_id])
        msg = P.ReKeyOwnerMsg(user_id, media_id, rk, _token_digest(token))
        self.send(scheme, "part2", session, ("cloud", self.cloud_id), msg)

    def request_arbitration(self, scheme: str, session: str, media_id: str, suspect: lut.MediaVector,
                            judge_id: str = "judge", decoder: str = "mf", tau: int = 0) -> None:
        if media_id not in self.catalog:
            raise UnknownMediaError(f"unknown media id {media_id!r}")
        gb = self.take("secret_matrix", lambda p: p.media_id == media_id).gbar
        fset = self.take("fingerprint_set").entries
        bundle = P.ArbitrationBundleMsg(media_id, self.catalog[media_id], suspect, gb, fset, decoder, tau)
        self.send(scheme, "part3", session, ("judge", judge_id), bundle)

    def receive_verdict(self) -> P.VerdictMsg:
        return self.take("verdict")


@dataclass
class _MediaRecord:
    key: P.SessionKey
    index: lut.IndexTable
    gbar: lut.SecretMatrix
    c: lut.MediaVector | None = None
    enc_c: afp.EncMedia | None = None


@dataclass
class _UserRecord:
    pk: pre.PublicKey
    enc_b: afp.EncFingerprint
    source_digest: str
    rk_self: pre.ReEncryptionKey | None = None
    rk_judge: pre.ReEncryptionKey | None = None
    rk_owner: dict = field(default_factory=dict)


class Cloud(Entity):
    role = "cloud"

    def __init__(self, entity_id, params, net, fp: lut.FpParams, strength: float, rng=None, keys=None):
        super().__init__(entity_id, params, net, rng, keys)
        self.fp = fp
        self.strength = strength
        self.g: lut.EncodingMatrix | None = None
        self.enc_e: afp.EncELut | None = None
        self.one: pre.Ciphertext2 | None = None
        self.media: dict[str, _MediaRecord] = {}
        self.users: dict[str, _UserRecord] = {}
        self.F: dict[str, afp.EncFingerprint] = {}
        self.D: dict[str, afp.EncDLut] = {}
        self._write = threading.Lock()

    def _stored(self, nbytes: int) -> None:
        self.counter.add("bytes_stored", nbytes)

    def store(self, scheme: str, session: str) -> None:
        g = self.take("encoding_matrix").g
        elut_msg = self.take("enc_elut")
        keys = self.take("session_keys").keys
        if scheme == SCHEME_I:
            items = self.take("media_collection").items
        else:
            items = self.take("enc_media_collection").items
        with self.counter.active(), self._write:
            if self.g is None:
                self.g, self.enc_e, self.one = g, elut_msg.enc_e, elut_msg.one
                self._stored(len(lut.to_bytes(g)) + len(elut_msg.enc_e.to_bytes()) + len(elut_msg.one.to_bytes()))
            for k in keys:
                if k.media_id in self.media:
                    raise ProtocolError(f"duplicate media id {k.media_id!r}")
                idx = k.table()
                gb = lut.gbar(idx, self.g)
                rec = _MediaRecord(k, idx, gb)
                if scheme == SCHEME_I:
                    rec.c = items[k.media_id]
                    self._stored(len(lut.to_bytes(rec.c)))
                else:
                    rec.enc_c = afp.enc_media_lut_encrypt(items[k.media_id], self.enc_e, idx, self.fp)
                    self._stored(len(rec.enc_c.to_bytes()))
                self._stored(gb.values.nbytes + len(k.sk_m))
                self.media[k.media_id] = rec
                self.net.bulletin[k.media_id] = gb.digest()

    def _collect_request(self, user_id: str):
        req = self.take("enc_fingerprint", lambda p: p.user_id == user_id)
        rk_self = self.take("rekey_self", lambda p: p.user_id == user_id)
        rk_judge = self.take("rekey_judge", lambda p: p.user_id == user_id)
        rk_owner = self.take("rekey_owner", lambda p: p.user_id == user_id)
        if req.media_id not in self.media:
            raise UnknownMediaError(f"unknown media id {req.media_id!r}")
        if rk_owner.media_id != req.media_id or rk_owner.token_digest != _token_digest(req.token):
            raise AuthorizationError(f"user {user_id!r} holds no valid authorization for {req.media_id!r}")
        uk = req.pk.key_id
        if rk_self.rk.delegator != uk or rk_self.rk.delegatee != uk or rk_judge.rk.delegator != uk:
            raise ProtocolError("re-encryption keys do not belong to the requesting user")
        return req, rk_self.rk, rk_judge.rk, rk_owner.rk

    def serve(self, scheme: str, session: str, user_id: str) -> None:
        """Part 2 on the cloud: derive F entry and D-LUT, then deliver."""
        req, rk_self, rk_judge, rk_owner = self._collect_request(user_id)
        part = "part2"
        with self.counter.active():
            with self._write:
                urec = self.users.get(user_id)
                src = req.enc_b.to_bytes()
                if urec is None:
                    urec = _UserRecord(req.pk, req.enc_b, P.digest(src))
                    self.users[user_id] = urec
                    self._stored(len(src))
                elif urec.source_digest != P.digest(src):
                    raise ProtocolError(f"user {user_id!r} already registered a different encrypted fingerprint")
                urec.rk_self, urec.rk_judge = rk_self, rk_judge
                urec.rk_owner[req.media_id] = rk_owner
            # every derivation below starts from the one stored object urec.enc_b
            enc_e1 = afp.reencrypt_vector(self.enc_e, rk_owner)
            one1 = pre.reencrypt(self.one, rk_owner)
            enc_b1 = afp.reencrypt_vector(urec.enc_b, rk_self)
            f_entry = afp.reencrypt_vector(urec.enc_b, rk_judge)
            with self._write:
                self.F[user_id] = f_entry
                self._stored(len(f_entry.to_bytes()))
            refs = {"user_id": user_id, "source": urec.source_digest}
            self.net.record_derivation(scheme, part, session, self.address, "fingerprint_set_entry", f_entry.to_bytes(), refs)
            enc_w = afp.enc_wlut_entries(enc_b1, one1, self.strength, self.fp)
            enc_d = afp.enc_dlut(enc_e1, enc_w, self.g, self.fp)
            self.net.record_derivation(scheme, part, session, self.address, "enc_dlut", enc_d.to_bytes(), refs)
            rec = self.media[req.media_id]
            to = ("user", user_id)
            if scheme == SCHEME_II:
                with self._write:
                    self.D[user_id] = enc_d
                    self._stored(len(enc_d.to_bytes()))
                enc_c1 = afp.reencrypt_vector(rec.enc_c, rk_owner)
                enc_mk = afp.enc_joint_decrypt_fingerprint(enc_c1, enc_d, rec.index)
        if scheme == SCHEME_I:
            self.send(scheme, part, session, to, P.EncDLutMsg(user_id, enc_d))
            self.send(scheme, part, session, to, P.MediaMsg(req.media_id, rec.c))
            self.send(scheme, part, session, to, P.SessionKeyMsg(rec.key))
        else:
            self.send(scheme, part, session, to, P.EncMediaResponseMsg(req.media_id, enc_mk))

    def provide_evidence(self, scheme: str, session: str, media_id: str, owner_id: str = "owner") -> None:
        if media_id not in self.media:
            raise UnknownMediaError(f"unknown media id {media_id!r}")
        to = ("owner", owner_id)
        self.send(scheme, "part3", session, to, P.SecretMatrixMsg(media_id, self.media[media_id].gbar))
        self.send(scheme, "part3", session, to, P.FingerprintSetMsg(dict(self.F)))


class User(Entity):
    role = "user"

    def __init__(self, entity_id, params, net, fp: lut.FpParams, L: int, np_rng: np.random.Generator,
                 rng=None, keys=None, fingerprint: lut.Fingerprint | None = None):
        super().__init__(entity_id, params, net, rng, keys)
        self.fp = fp
        self.b = fingerprint if fingerprint is not None else lut.gen_fingerprint(L, np_rng)
        self._enc_b: afp.EncFingerprint | None = None
        self.tokens: dict[str, bytes] = {}
        self.copies: dict[str, lut.MediaVector] = {}
        self.dlut: lut.DLut | None = None

    def request_access(self, scheme: str, session: str, media_id: str, owner_id: str = "owner") -> None:
        self.send(scheme, "authorize", session, ("owner", owner_id), P.AccessRequestMsg(self.id, media_id, self.keys.pk))

    def receive_token(self) -> None:
        tok = self.take("auth_token")
        self.tokens[tok.media_id] = tok.token

    def submit(self, scheme: str, session: str, media_id: str, cloud_id: str = "cloud", judge_id: str = "judge") -> None:
        token = self.tokens.get(media_id)
        if token is None:
            raise AuthorizationError(f"user {self.id!r} has no authorization token for {media_id!r}")
        with self.counter.active():
            if self._enc_b is None:
                self._enc_b = afp.enc_fingerprint(self.params, self.keys.pk, self.b, self.rng)
            rk_self = pre.rekey(self.keys.sk, self.keys.pk, self.keys.pk)
            rk_judge = pre.rekey(self.keys.sk, self.keys.pk, self.net.directory[judge_id])
        to = ("cloud", cloud_id)
        self.send(scheme, "part2", session, to, P.EncFingerprintMsg(self.id, media_id, token, self.keys.pk, self._enc_b))
        self.send(scheme, "part2", session, to, P.ReKeySelfMsg(self.id, media_id, rk_self))
        self.send(scheme, "part2", session, to, P.ReKeyJudgeMsg(self.id, media_id, rk_judge))

    def finish(self, scheme: str) -> lut.MediaVector:
        with self.counter.active():
            if scheme == SCHEME_I:
                enc_d = self.take("enc_dlut").enc_d
                media = self.take("media")
                key = self.take("session_key").key
                # exact D-LUT at the squared scale; joint decryption rounds once
                self.dlut = afp.dec_dlut(self.params, self.keys.sk, enc_d)
                mk = lut.joint_decrypt_fingerprint(media.c, key.table(), self.dlut)
                mid = media.media_id
            else:
                resp = self.take("enc_media_response")
                mk = afp.dec_media(self.params, self.keys.sk, resp.enc, self.fp.frac_bits)
                mid = resp.media_id
        self.copies[mid] = mk
        return mk


@dataclass
class Verdict:
    media_id: str
    users: list[str]
    distances: dict[str, int]
    ambiguous: bool
    estimate: lut.Fingerprint | None = None

    @property
    def user(self) -> str | None:
        return self.users[0] if len(self.users) == 1 else None


class Judge(Entity):
    role = "judge"

    def __init__(self, entity_id, params, net, rng=None, keys=None):
        super().__init__(entity_id, params, net, rng, keys)
        self.verdicts: list[Verdict] = []

    def arbitrate(self, scheme: str, session: str, owner_id: str = "owner") -> Verdict:
        bundle = self.take("arbitration_bundle")
        if self.net.bulletin.get(bundle.media_id) != bundle.gbar.digest():
            raise ProtocolError(f"secret matrix for {bundle.media_id!r} does not match the stored digest")
        with self.counter.active():
            detect = lut.detect_pinv if bundle.decoder == "pinv" else lut.detect_mf
            est = detect(bundle.suspect, bundle.original, bundle.gbar)
            dist = {}
            for uid, enc in sorted(bundle.fingerprints.items()):
                bits = afp.decrypt_vector(self.params, self.keys.sk, enc, bound=1)
                dist[uid] = est.hamming(lut.Fingerprint(bits))
        users = sorted(u for u, d in dist.items() if d <= bundle.tau)
        v = Verdict(bundle.media_id, users, dist, len(users) > 1, est)
        self.verdicts.append(v)
        self.send(scheme, "part3", session, ("owner", owner_id), P.VerdictMsg(v.media_id, users, dist, v.ambiguous))
        return v
