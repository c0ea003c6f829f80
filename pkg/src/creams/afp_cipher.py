"""Fingerprinting arithmetic carried out on PRE ciphertexts.

The cloud builds a user's D-LUT without seeing it: the user's encrypted
fingerprint bits become encrypted watermark weights, which are spread over
the LUT with the public encoding matrix and combined with the encrypted
E-LUT.  Everything here is integer exponent arithmetic on ciphertexts, so the
results decrypt to exactly the integers the plaintext path in :mod:`creams.lut`
computes.

All D-LUT and media arithmetic is carried at the squared scale ``Q^2``: the
E-LUT (scale ``Q``) is lifted by the exponent ``Q``, products of watermark
weights (scale ``Q``) and encoding-matrix entries (scale ``Q``) land there
naturally, and media are encrypted pre-multiplied by ``Q``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import pre
from .lut import (
    DLut,
    ELut,
    EncodingMatrix,
    Fingerprint,
    FpParams,
    IndexTable,
    MediaVector,
    quantized_amplitude,
    rescale,
)
from .pre import Ciphertext1, Ciphertext2, HomomorphismError


@dataclass(eq=False)
class CtVector:
    """A sequence of same-level ciphertexts under one key at one scale."""

    entries: list

    KIND = 0

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    @property
    def level(self) -> int:
        return self.entries[0].level if self.entries else 0

    @property
    def key_id(self) -> bytes:
        return self.entries[0].key_id if self.entries else b"\0" * pre.KEY_ID_BYTES

    @property
    def frac_bits(self) -> int:
        return self.entries[0].frac_bits if self.entries else 0

    # magic "CENC", u8 kind, u8 level, key id, i32 scale, u32 count, entries
    _HEAD = struct.Struct("<4sBB")

    def to_bytes(self) -> bytes:
        head = self._HEAD.pack(b"CENC", self.KIND, self.level) + self.key_id
        head += struct.pack("<iI", self.frac_bits, len(self.entries))
        return head + b"".join(c.to_bytes() for c in self.entries)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CtVector":
        magic, kind, level = cls._HEAD.unpack_from(data)
        if magic != b"CENC":
            raise pre.DecodeError("not a ciphertext vector")
        off = cls._HEAD.size + pre.KEY_ID_BYTES
        _frac, n = struct.unpack_from("<iI", data, off)
        off += 8
        ct_cls, size = (Ciphertext1, pre.CT1_BYTES) if level == 1 else (Ciphertext2, pre.CT2_BYTES)
        if n and len(data) != off + n * size:
            raise pre.DecodeError("ciphertext vector has wrong length")
        entries = [ct_cls.from_bytes(data[off + i * size : off + (i + 1) * size]) for i in range(n)]
        target = _VECTOR_KINDS.get(kind, CtVector)
        if cls is not CtVector and target is not cls:
            raise pre.DecodeError(f"expected {cls.__name__}, got {target.__name__}")
        return target(entries)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_bytes() == other.to_bytes()


class EncFingerprint(CtVector):
    KIND = 1


class EncWeights(CtVector):
    KIND = 2


class EncELut(CtVector):
    KIND = 3


class EncDLut(CtVector):
    KIND = 4


class EncMedia(CtVector):
    KIND = 5


_VECTOR_KINDS = {c.KIND: c for c in (EncFingerprint, EncWeights, EncELut, EncDLut, EncMedia)}


def reencrypt_vector(vec: CtVector, rk: pre.ReEncryptionKey) -> CtVector:
    return type(vec)([pre.reencrypt(c, rk) for c in vec])


def decrypt_vector(params: pre.PublicParams, sk: pre.SecretKey, vec: CtVector, bound: int | None = None) -> np.ndarray:
    return np.array([pre.decrypt(params, sk, c, bound) for c in vec], dtype=np.int64)


def worst_case_magnitude(fp: FpParams, S: int, L: int) -> int:
    """Bound on any plaintext the ciphertext-domain pipeline decrypts.

    Media at ``Q^2`` reach ``Q * 2^(media+f)``; each of the ``S`` lifted
    E-LUT or D-LUT terms reaches ``Q * 2^(elut+f)`` plus the watermark
    ``L * 2^(gmat+f) * 2^(wlut+f)``.
    """
    q = fp.scale
    media = q * fp.limit(fp.media_bits)
    w2 = L * fp.limit(fp.gmat_bits) * fp.limit(fp.wlut_bits)
    lut = q * fp.limit(fp.elut_bits) + w2
    return media + S * lut


# -- encryption of LUT material ---------------------------------------------

def enc_fingerprint(params: pre.PublicParams, pk_u: pre.PublicKey, b: Fingerprint, rng=None) -> EncFingerprint:
    return EncFingerprint([pre.enc2(params, pk_u, int(x), 0, rng) for x in b.bits])


def enc_elut(params: pre.PublicParams, pk_o: pre.PublicKey, e: ELut, rng=None) -> EncELut:
    return EncELut([pre.enc2(params, pk_o, int(x), e.frac_bits, rng) for x in e.values])


def enc_one(params: pre.PublicParams, pk_o: pre.PublicKey, rng=None) -> Ciphertext2:
    """The canonical encryption of 1 that anchors the weight computation."""
    return pre.enc2(params, pk_o, 1, 0, rng)


def enc_wlut_entries(enc_b: EncFingerprint, enc_one1: Ciphertext1, strength: float, fp: FpParams) -> EncWeights:
    """``E(w_l) = E(b_l)^(2a) * E(1)^(-a)`` with ``a = quantize(strength)``.

    Inputs are first-level ciphertexts under the user key at scale 1; the
    weights come out at the base scale.
    """
    if enc_one1.frac_bits != 0 or enc_b.frac_bits != 0:
        raise HomomorphismError("fingerprint bits and the unit anchor must be unscaled")
    a = quantized_amplitude(strength, fp)
    neg_anchor = pre.ct_scalar_mul(enc_one1, -a, fp.frac_bits)
    return EncWeights([pre.ct_add(pre.ct_scalar_mul(c, 2 * a, fp.frac_bits), neg_anchor) for c in enc_b])


def enc_dlut(enc_e: EncELut, enc_w: EncWeights, g: EncodingMatrix, fp: FpParams) -> EncDLut:
    """``E(D2(t)) = E(E(t))^(-Q) * prod_l E(w_l)^G(t,l)`` at scale ``Q^2``."""
    T, L = g.shape
    if len(enc_e) != T or len(enc_w) != L:
        raise HomomorphismError(f"shape mismatch: E-LUT {len(enc_e)}, weights {len(enc_w)}, G {g.shape}")
    if enc_e.level != 1 or enc_w.level != 1:
        raise HomomorphismError("D-LUT derivation needs first-level inputs")
    q = fp.scale
    out = []
    for t in range(T):
        acc = pre.ct_scalar_mul(enc_e[t], -q, fp.frac_bits)
        for l in range(L):
            k = int(g.values[t, l])
            if k:
                acc = pre.ct_add(acc, pre.ct_scalar_mul(enc_w[l], k, g.frac_bits))
        out.append(acc)
    return EncDLut(out)


def dec_dlut(params: pre.PublicParams, sk: pre.SecretKey, enc_d: EncDLut) -> DLut:
    """The user's exact D-LUT at the squared scale."""
    return DLut(decrypt_vector(params, sk, enc_d), enc_d.frac_bits)


# -- media in the ciphertext domain -----------------------------------------

def enc_media(params: pre.PublicParams, pk_o: pre.PublicKey, m: MediaVector, rng=None) -> EncMedia:
    """Encrypt ``Q * m`` so the media sit at the squared scale."""
    shift = m.frac_bits
    return EncMedia([pre.enc2(params, pk_o, int(x) << shift, 2 * shift, rng) for x in m.values])


def lift_elut(enc_e: EncELut, fp: FpParams) -> EncELut:
    return EncELut([pre.ct_scalar_mul(c, fp.scale, fp.frac_bits) for c in enc_e])


def _apply_lut(base: CtVector, lut: CtVector, idx: IndexTable) -> list:
    if len(base) != idx.M:
        raise HomomorphismError(f"media length {len(base)} != index rows {idx.M}")
    out = []
    for i, row in enumerate(idx.rows()):
        acc = base[i]
        for t in row:
            acc = pre.ct_add(acc, lut[int(t)])
        out.append(acc)
    return out


def enc_media_lut_encrypt(enc_m: EncMedia, enc_e: EncELut, idx: IndexTable, fp: FpParams) -> EncMedia:
    """``E(c2_i) = E(Q m_i) * prod_h E(E(t_ih))^Q`` at scale ``Q^2``."""
    return EncMedia(_apply_lut(enc_m, lift_elut(enc_e, fp), idx))


def enc_joint_decrypt_fingerprint(enc_c1: EncMedia, enc_d: EncDLut, idx: IndexTable) -> EncMedia:
    """``E(m2_i) = E(c2_i) * prod_h E(D2(t_ih))``; still at scale ``Q^2``."""
    if enc_c1.level != 1 or enc_d.level != 1:
        raise HomomorphismError("joint decryption needs first-level inputs")
    return EncMedia(_apply_lut(enc_c1, enc_d, idx))


def dec_media(params: pre.PublicParams, sk: pre.SecretKey, enc: EncMedia, frac_bits: int) -> MediaVector:
    """Decrypt and round once from the ciphertext scale down to ``frac_bits``."""
    raw = decrypt_vector(params, sk, enc)
    return MediaVector(rescale(raw, enc.frac_bits - frac_bits), frac_bits)
