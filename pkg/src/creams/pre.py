"""Lifted-ElGamal proxy re-encryption over BLS12-381.

Two-level scheme with additive homomorphism.  Second-level ciphertexts
``(g1^r, Z^m * Z^(a1 r))`` can be turned into first-level ciphertexts for a
delegatee by one pairing with a re-encryption key ``g2^(a1 b2)``.  Plaintexts
are recovered from ``Z^m`` with a centred baby-step giant-step search, so
only small signed plaintexts are supported.

The Type-1 pairing of the original construction is mapped onto the Type-3
BLS12-381 pairing as follows: ciphertext components live in G1, public
delegation components and re-encryption keys live in G2, and the pairing is
only evaluated during re-encryption and second-level decryption.
"""

from __future__ import annotations

import hashlib
import math
import secrets
import struct
import threading
from dataclasses import dataclass, field
from typing import Union

import pymcl

from .counters import bump

CURVE_BLS12_381 = 0x01
CURVES = {CURVE_BLS12_381: "BLS12-381"}

GROUP_ORDER = int(pymcl.r)
DEFAULT_DLOG_BOUND = 2**26

G1_BYTES = 48
G2_BYTES = 96
GT_BYTES = 576
KEY_ID_BYTES = 8

# object type tags for the binary encoding
TAG_PARAMS = 0x01
TAG_PUBLIC_KEY = 0x02
TAG_SECRET_KEY = 0x03
TAG_REKEY = 0x04
TAG_CT1 = 0x05
TAG_CT2 = 0x06


class PreError(Exception):
    pass


class ConfigurationError(PreError):
    pass


class PlaintextOverflowError(PreError):
    pass


class RangeError(PreError):
    """Discrete log not found within the configured bound."""


class DelegationError(PreError):
    pass


class HomomorphismError(PreError):
    pass


class DecodeError(PreError):
    pass


def _fr(k: int) -> pymcl.Fr:
    return pymcl.Fr(str(k % GROUP_ORDER))


def gt_pow(x: pymcl.GT, k: int) -> pymcl.GT:
    """Signed exponentiation in GT; negative exponents use the cheap inverse."""
    bump("gt_exp")
    if k == 0:
        return pymcl.GT()
    y = x ** _fr(abs(k))
    return ~y if k < 0 else y


def g1_pow(x: pymcl.G1, k: int) -> pymcl.G1:
    bump("g1_exp")
    if k == 0:
        return pymcl.G1()
    y = x * _fr(abs(k))
    return -y if k < 0 else y


def g2_pow(x: pymcl.G2, k: int) -> pymcl.G2:
    bump("g2_exp")
    return x * _fr(k)


def pairing(a: pymcl.G1, b: pymcl.G2) -> pymcl.GT:
    bump("pairing")
    return pymcl.pairing(a, b)


@dataclass(frozen=True, eq=False)
class PublicParams:
    g1: pymcl.G1
    g2: pymcl.G2
    z: pymcl.GT
    dlog_bound: int = DEFAULT_DLOG_BOUND
    curve_id: int = CURVE_BLS12_381

    @property
    def q(self) -> int:
        return GROUP_ORDER

    def to_bytes(self) -> bytes:
        return (
            bytes([TAG_PARAMS, self.curve_id])
            + struct.pack("<Q", self.dlog_bound)
            + self.g1.serialize()
            + self.g2.serialize()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicParams":
        curve = _check_header(data, TAG_PARAMS, 2 + 8 + G1_BYTES + G2_BYTES)
        (bound,) = struct.unpack_from("<Q", data, 2)
        g1 = pymcl.G1.deserialize(data[10 : 10 + G1_BYTES])
        g2 = pymcl.G2.deserialize(data[10 + G1_BYTES :])
        return cls(g1, g2, pymcl.pairing(g1, g2), bound, curve)

    def __eq__(self, other):
        return isinstance(other, PublicParams) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


def setup(seed: bytes = b"", dlog_bound: int = DEFAULT_DLOG_BOUND, curve_id: int = CURVE_BLS12_381) -> PublicParams:
    """Deterministic public parameters; generators are hashed from ``seed``."""
    if curve_id not in CURVES:
        raise ConfigurationError(f"unknown curve id {curve_id}")
    if dlog_bound < 1:
        raise ConfigurationError("dlog_bound must be >= 1")
    g1 = pymcl.G1.hash(b"creams/g1/" + seed)
    g2 = pymcl.G2.hash(b"creams/g2/" + seed)
    z = pymcl.pairing(g1, g2)
    if g1.is_zero() or g2.is_zero() or z.is_one():
        raise ConfigurationError("degenerate generators for this seed")
    return PublicParams(g1, g2, z, dlog_bound, curve_id)


@dataclass(frozen=True, eq=False)
class PublicKey:
    pk1: pymcl.GT  # Z^a1
    pk2: pymcl.G2  # g2^a2

    def to_bytes(self) -> bytes:
        return bytes([TAG_PUBLIC_KEY, CURVE_BLS12_381]) + self.pk1.serialize() + self.pk2.serialize()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        _check_header(data, TAG_PUBLIC_KEY, 2 + GT_BYTES + G2_BYTES)
        return cls(
            pymcl.GT.deserialize(data[2 : 2 + GT_BYTES]),
            pymcl.G2.deserialize(data[2 + GT_BYTES :]),
        )

    @property
    def key_id(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()[:KEY_ID_BYTES]

    def __eq__(self, other):
        return isinstance(other, PublicKey) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


@dataclass(frozen=True)
class SecretKey:
    a1: int
    a2: int

    def to_bytes(self) -> bytes:
        return (
            bytes([TAG_SECRET_KEY, CURVE_BLS12_381])
            + self.a1.to_bytes(32, "little")
            + self.a2.to_bytes(32, "little")
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        _check_header(data, TAG_SECRET_KEY, 66)
        return cls(int.from_bytes(data[2:34], "little"), int.from_bytes(data[34:66], "little"))


@dataclass(frozen=True)
class KeyPair:
    sk: SecretKey
    pk: PublicKey

    @property
    def key_id(self) -> bytes:
        return self.pk.key_id


@dataclass(frozen=True, eq=False)
class ReEncryptionKey:
    rk: pymcl.G2
    delegator: bytes
    delegatee: bytes

    def to_bytes(self) -> bytes:
        return (
            bytes([TAG_REKEY, CURVE_BLS12_381]) + self.delegator + self.delegatee + self.rk.serialize()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReEncryptionKey":
        _check_header(data, TAG_REKEY, 2 + 2 * KEY_ID_BYTES + G2_BYTES)
        k = KEY_ID_BYTES
        return cls(pymcl.G2.deserialize(data[2 + 2 * k :]), data[2 : 2 + k], data[2 + k : 2 + 2 * k])

    def __eq__(self, other):
        return isinstance(other, ReEncryptionKey) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


@dataclass(frozen=True, eq=False)
class Ciphertext1:
    """First-level ciphertext ``(alpha, beta)`` in GT x GT.

    ``slot`` names which secret scalar opens it: 1 for a fresh first-level
    encryption, 2 for the output of re-encryption.
    """

    alpha: pymcl.GT
    beta: pymcl.GT
    key_id: bytes
    frac_bits: int = 0
    slot: int = 1

    level = 1

    def to_bytes(self) -> bytes:
        return (
            bytes([TAG_CT1, CURVE_BLS12_381])
            + self.key_id
            + bytes([self.slot])
            + struct.pack("<i", self.frac_bits)
            + self.alpha.serialize()
            + self.beta.serialize()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext1":
        k = KEY_ID_BYTES
        _check_header(data, TAG_CT1, 2 + k + 1 + 4 + 2 * GT_BYTES)
        slot = data[2 + k]
        (frac,) = struct.unpack_from("<i", data, 3 + k)
        off = 7 + k
        return cls(
            pymcl.GT.deserialize(data[off : off + GT_BYTES]),
            pymcl.GT.deserialize(data[off + GT_BYTES :]),
            data[2 : 2 + k],
            frac,
            slot,
        )

    def __eq__(self, other):
        return isinstance(other, Ciphertext1) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


@dataclass(frozen=True, eq=False)
class Ciphertext2:
    """Second-level ciphertext ``(alpha, beta)`` in G1 x GT; re-encryptable once."""

    alpha: pymcl.G1
    beta: pymcl.GT
    key_id: bytes
    frac_bits: int = 0

    level = 2

    def to_bytes(self) -> bytes:
        return (
            bytes([TAG_CT2, CURVE_BLS12_381])
            + self.key_id
            + struct.pack("<i", self.frac_bits)
            + self.alpha.serialize()
            + self.beta.serialize()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext2":
        k = KEY_ID_BYTES
        _check_header(data, TAG_CT2, 2 + k + 4 + G1_BYTES + GT_BYTES)
        (frac,) = struct.unpack_from("<i", data, 2 + k)
        off = 6 + k
        return cls(
            pymcl.G1.deserialize(data[off : off + G1_BYTES]),
            pymcl.GT.deserialize(data[off + G1_BYTES :]),
            data[2 : 2 + k],
            frac,
        )

    def __eq__(self, other):
        return isinstance(other, Ciphertext2) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


Ciphertext = Union[Ciphertext1, Ciphertext2]

CT1_BYTES = 2 + KEY_ID_BYTES + 1 + 4 + 2 * GT_BYTES
CT2_BYTES = 2 + KEY_ID_BYTES + 4 + G1_BYTES + GT_BYTES


def _check_header(data: bytes, tag: int, length: int) -> int:
    if len(data) != length:
        raise DecodeError(f"expected {length} bytes for tag {tag:#x}, got {len(data)}")
    if data[0] != tag:
        raise DecodeError(f"type tag {data[0]:#x} != {tag:#x}")
    if data[1] not in CURVES:
        raise ConfigurationError(f"unknown curve id {data[1]}")
    return data[1]


def decode(data: bytes):
    """Decode any tagged PRE object."""
    if not data:
        raise DecodeError("empty buffer")
    cls = {
        TAG_PARAMS: PublicParams,
        TAG_PUBLIC_KEY: PublicKey,
        TAG_SECRET_KEY: SecretKey,
        TAG_REKEY: ReEncryptionKey,
        TAG_CT1: Ciphertext1,
        TAG_CT2: Ciphertext2,
    }.get(data[0])
    if cls is None:
        raise DecodeError(f"unknown type tag {data[0]:#x}")
    return cls.from_bytes(data)


# -- key management ---------------------------------------------------------

def _default_rng():
    return secrets.SystemRandom()


def keygen(params: PublicParams, rng=None) -> KeyPair:
    rng = rng or _default_rng()
    a1 = rng.randrange(1, GROUP_ORDER)
    a2 = rng.randrange(1, GROUP_ORDER)
    return KeyPair(SecretKey(a1, a2), public_key(params, SecretKey(a1, a2)))


def public_key(params: PublicParams, sk: SecretKey) -> PublicKey:
    return PublicKey(gt_pow(params.z, sk.a1), g2_pow(params.g2, sk.a2))


def rekey(sk_a: SecretKey, pk_a: PublicKey, pk_b: PublicKey) -> ReEncryptionKey:
    """``rk_{A->B} = (g2^b2)^a1``.  With ``pk_b == pk_a`` this is the
    self-delegation key that turns A's second-level ciphertexts into
    first-level ones opened by ``a2``."""
    return ReEncryptionKey(g2_pow(pk_b.pk2, sk_a.a1), pk_a.key_id, pk_b.key_id)


# -- encryption -------------------------------------------------------------

def _check_plaintext(m: int) -> None:
    if 2 * abs(m) >= GROUP_ORDER:
        raise PlaintextOverflowError(f"|m| must be < q/2, got {m}")


def enc1(params: PublicParams, pk: PublicKey, m: int, frac_bits: int = 0, rng=None) -> Ciphertext1:
    """``(Z^(a1 r), Z^m Z^r)``; opened with ``a1``."""
    _check_plaintext(m)
    rng = rng or _default_rng()
    r = rng.randrange(1, GROUP_ORDER)
    bump("gt_mul")
    return Ciphertext1(
        gt_pow(pk.pk1, r), gt_pow(params.z, m) * gt_pow(params.z, r), pk.key_id, frac_bits, slot=1
    )


def enc2(params: PublicParams, pk: PublicKey, m: int, frac_bits: int = 0, rng=None) -> Ciphertext2:
    """``(g1^r, Z^m Z^(a1 r))``."""
    _check_plaintext(m)
    rng = rng or _default_rng()
    r = rng.randrange(1, GROUP_ORDER)
    bump("gt_mul")
    return Ciphertext2(g1_pow(params.g1, r), gt_pow(params.z, m) * gt_pow(pk.pk1, r), pk.key_id, frac_bits)


def reencrypt(ct: Ciphertext2, rk: ReEncryptionKey) -> Ciphertext1:
    if not isinstance(ct, Ciphertext2):
        raise DelegationError("only second-level ciphertexts can be re-encrypted")
    if ct.key_id != rk.delegator:
        raise DelegationError(
            f"ciphertext key {ct.key_id.hex()} does not match delegator {rk.delegator.hex()}"
        )
    return Ciphertext1(pairing(ct.alpha, rk.rk), ct.beta, rk.delegatee, ct.frac_bits, slot=2)


# -- homomorphism -----------------------------------------------------------

def _check_compatible(x: Ciphertext, y: Ciphertext) -> None:
    if type(x) is not type(y):
        raise HomomorphismError("cannot combine ciphertexts of different levels")
    if x.key_id != y.key_id:
        raise HomomorphismError("cannot combine ciphertexts under different keys")
    if x.frac_bits != y.frac_bits:
        raise HomomorphismError(f"scale mismatch: 2^{x.frac_bits} vs 2^{y.frac_bits}")
    if isinstance(x, Ciphertext1) and x.slot != y.slot:
        raise HomomorphismError("cannot combine first-level ciphertexts opened by different scalars")


def ct_add(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    _check_compatible(x, y)
    bump("gt_mul")
    if isinstance(x, Ciphertext2):
        bump("g1_add")
        return Ciphertext2(x.alpha + y.alpha, x.beta * y.beta, x.key_id, x.frac_bits)
    bump("gt_mul")
    return Ciphertext1(x.alpha * y.alpha, x.beta * y.beta, x.key_id, x.frac_bits, x.slot)


def ct_sum(cts) -> Ciphertext:
    it = iter(cts)
    acc = next(it)
    for c in it:
        acc = ct_add(acc, c)
    return acc


def ct_scalar_mul(x: Ciphertext, k: int, k_frac_bits: int = 0) -> Ciphertext:
    """Raise both components to ``k``; the plaintext becomes ``k * m``.

    ``k_frac_bits`` declares the fixed-point scale of ``k`` itself and is
    added to the ciphertext's scale.
    """
    frac = x.frac_bits + k_frac_bits
    if isinstance(x, Ciphertext2):
        return Ciphertext2(g1_pow(x.alpha, k), gt_pow(x.beta, k), x.key_id, frac)
    return Ciphertext1(gt_pow(x.alpha, k), gt_pow(x.beta, k), x.key_id, frac, x.slot)


def ct_neg(x: Ciphertext) -> Ciphertext:
    if isinstance(x, Ciphertext2):
        return Ciphertext2(-x.alpha, ~x.beta, x.key_id, x.frac_bits)
    return Ciphertext1(~x.alpha, ~x.beta, x.key_id, x.frac_bits, x.slot)


# -- decryption -------------------------------------------------------------

def dec1(params: PublicParams, sk: SecretKey, ct: Ciphertext1, bound: int | None = None) -> int:
    """``Z^m = beta / alpha^(1/a_slot)``, then a bounded discrete log."""
    if not isinstance(ct, Ciphertext1):
        raise PreError("dec1 expects a first-level ciphertext")
    a = sk.a1 if ct.slot == 1 else sk.a2
    inv = pow(a, -1, GROUP_ORDER)
    bump("gt_mul")
    zm = ct.beta / gt_pow(ct.alpha, inv)
    return dlog_solve(params, zm, params.dlog_bound if bound is None else bound)


def dec2(params: PublicParams, sk: SecretKey, ct: Ciphertext2, bound: int | None = None) -> int:
    """``Z^m = beta / e(alpha, g2)^a1``."""
    if not isinstance(ct, Ciphertext2):
        raise PreError("dec2 expects a second-level ciphertext")
    bump("gt_mul")
    zm = ct.beta / pairing(g1_pow(ct.alpha, sk.a1), params.g2)
    return dlog_solve(params, zm, params.dlog_bound if bound is None else bound)


def decrypt(params: PublicParams, sk: SecretKey, ct: Ciphertext, bound: int | None = None) -> int:
    if isinstance(ct, Ciphertext2):
        return dec2(params, sk, ct, bound)
    return dec1(params, sk, ct, bound)


# -- small-range discrete log -----------------------------------------------

@dataclass
class _BabySteps:
    n: int
    table: dict[bytes, int]
    giant_up: pymcl.GT = field(repr=False)  # Z^-n
    giant_down: pymcl.GT = field(repr=False)  # Z^n


_tables: dict[tuple[bytes, int], _BabySteps] = {}
_tables_lock = threading.Lock()


def baby_step_count(bound: int) -> int:
    # ceil(sqrt(2*bound + 1))
    return math.isqrt(2 * bound) + 1


def _baby_steps(z: pymcl.GT, bound: int) -> _BabySteps:
    key = (z.serialize(), bound)
    tab = _tables.get(key)
    if tab is not None:
        return tab
    with _tables_lock:
        tab = _tables.get(key)
        if tab is None:
            n = baby_step_count(bound)
            table = {}
            acc = pymcl.GT()
            for j in range(n):
                table[acc.serialize()] = j
                acc = acc * z
            zn = z ** _fr(n)
            tab = _BabySteps(n, table, ~zn, zn)
            _tables[key] = tab
    return tab


def dlog_solve(params: PublicParams, target: pymcl.GT, bound: int) -> int:
    """Return ``x`` with ``Z^x == target`` and ``|x| <= bound``.

    Baby steps ``Z^j`` for ``0 <= j < n`` with ``n = ceil(sqrt(2*bound+1))``
    are cached per ``(Z, bound)``.  Giant steps alternate outward from zero
    so small magnitudes are found first.
    """
    if bound < 0:
        raise ConfigurationError("bound must be >= 0")
    bump("dlog")
    tab = _baby_steps(params.z, bound)
    n = tab.n
    lo = -((bound + n - 1) // n)
    hi = bound // n
    up = target  # target * Z^(-i n) for i >= 0
    down = target * tab.giant_down  # target * Z^(n) i.e. i = -1
    i_up, i_down = 0, -1
    while i_up <= hi or i_down >= lo:
        if i_up <= hi:
            j = tab.table.get(up.serialize())
            if j is not None:
                x = i_up * n + j
                if -bound <= x <= bound:
                    return x
            up = up * tab.giant_up
            i_up += 1
        if i_down >= lo:
            j = tab.table.get(down.serialize())
            if j is not None:
                x = i_down * n + j
                if -bound <= x <= bound:
                    return x
            down = down * tab.giant_down
            i_down -= 1
    raise RangeError(f"discrete log not found within +/-{bound}")
