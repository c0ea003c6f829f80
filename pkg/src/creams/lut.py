"""Plaintext-domain LUT fingerprinting on fixed-point integers.

Every real quantity is carried as ``round(x * 2^f)`` with an explicit number of
fractional bits.  The E-LUT masks a media vector by adding ``S`` pseudorandomly
selected entries to every coefficient; a user's D-LUT ``-E + G w`` removes
the mask and leaves the spread-spectrum watermark ``Gbar w`` behind.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes


class FixedPointOverflowError(ValueError):
    pass


class DecoderError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class FpParams:
    frac_bits: int = 4
    elut_bits: int = 14
    wlut_bits: int = 2
    media_bits: int = 12
    # not fixed by the source experiments; bounds |G| < 4
    gmat_bits: int = 2

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    def limit(self, magnitude_bits: int) -> int:
        """Largest representable integer for the given magnitude width."""
        return (1 << (magnitude_bits + self.frac_bits)) - 1

    def quantize(self, x, magnitude_bits: int) -> np.ndarray:
        lim = self.limit(magnitude_bits)
        q = round_half_away(np.asarray(x, dtype=np.float64) * self.scale)
        return np.clip(q, -lim, lim).astype(np.int64)

    def dequantize(self, v, frac_bits: int | None = None) -> np.ndarray:
        f = self.frac_bits if frac_bits is None else frac_bits
        return np.asarray(v, dtype=np.float64) / (1 << f)


@dataclass(frozen=True)
class SystemParams:
    """Scheme sizes and strengths.

    ``wlut_variance`` and ``noise_variance`` are variances, following the
    experiment description; the per-bit embedding amplitude is therefore
    ``sqrt(wlut_variance)``.  ``elut_std`` is a standard deviation.
    """

    T: int = 1000
    L: int = 50
    S: int = 4
    M: int | None = None
    elut_std: float = 1000.0
    wlut_variance: float = 0.6
    noise_variance: float = 0.0
    K: int = 500

    def __post_init__(self):
        if not (self.T >= self.S >= 1):
            raise ParameterError(f"need T >= S >= 1, got T={self.T} S={self.S}")
        if self.L < 1:
            raise ParameterError("L must be >= 1")
        if self.M is not None and self.M < self.L:
            raise ParameterError(f"need M >= L for detection, got M={self.M} L={self.L}")
        if self.elut_std < 0 or self.wlut_variance < 0 or self.noise_variance < 0:
            raise ParameterError("strengths must be non-negative")
        if self.K < 0:
            raise ParameterError("K must be >= 0")

    @property
    def w_amplitude(self) -> float:
        return math.sqrt(self.wlut_variance)

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_variance)


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rescale(v, shift_bits: int) -> np.ndarray:
    """Exact integer ``round_half_away(v / 2^shift_bits)``."""
    v = np.asarray(v, dtype=np.int64)
    if shift_bits == 0:
        return v.copy()
    d = 1 << shift_bits
    return np.sign(v) * ((2 * np.abs(v) + d) // (2 * d))


def rescale_int(v: int, shift_bits: int) -> int:
    if shift_bits == 0:
        return v
    d = 1 << shift_bits
    mag = (2 * abs(v) + d) // (2 * d)
    return -mag if v < 0 else mag


# -- LUT family -------------------------------------------------------------

@dataclass(eq=False)
class ELut:
    values: np.ndarray
    frac_bits: int = 4

    @property
    def T(self) -> int:
        return len(self.values)


@dataclass(eq=False)
class EncodingMatrix:
    values: np.ndarray  # T x L
    frac_bits: int = 4

    @property
    def shape(self):
        return self.values.shape

    def real(self) -> np.ndarray:
        return self.values / float(1 << self.frac_bits)


@dataclass(eq=False)
class Fingerprint:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        return isinstance(other, Fingerprint) and np.array_equal(self.bits, other.bits)

    def hamming(self, other: "Fingerprint") -> int:
        return int(np.count_nonzero(self.bits != other.bits))


@dataclass(eq=False)
class WLut:
    values: np.ndarray
    frac_bits: int = 8


@dataclass(eq=False)
class DLut:
    values: np.ndarray
    frac_bits: int = 4


@dataclass(eq=False)
class MediaVector:
    values: np.ndarray
    frac_bits: int = 4

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)

    def __len__(self):
        return len(self.values)

    def real(self) -> np.ndarray:
        return self.values / float(1 << self.frac_bits)

    def __eq__(self, other):
        return (
            isinstance(other, MediaVector)
            and self.frac_bits == other.frac_bits
            and np.array_equal(self.values, other.values)
        )


@dataclass(eq=False)
class IndexTable:
    """``M x S`` LUT indices; repeated indices within a row count once."""

    indices: np.ndarray
    T: int

    @property
    def M(self) -> int:
        return self.indices.shape[0]

    @property
    def S(self) -> int:
        return self.indices.shape[1]

    @cached_property
    def _unique(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.sort(self.indices, axis=1)
        keep = np.ones_like(s, dtype=bool)
        keep[:, 1:] = s[:, 1:] != s[:, :-1]
        return s, keep

    def gather_sum(self, lut_values: np.ndarray) -> np.ndarray:
        """``B^m @ lut``: per row, the sum of the selected distinct entries."""
        return np.asarray(self.matrix @ np.asarray(lut_values, dtype=np.int64), dtype=np.int64)

    def rows(self):
        """Distinct LUT indices per coefficient, in ascending order."""
        s, keep = self._unique
        for i in range(self.M):
            yield s[i][keep[i]]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        s, keep = self._unique
        r = np.repeat(np.arange(self.M), self.S).reshape(self.M, self.S)[keep]
        c = s[keep]
        return sp.csr_matrix((np.ones(len(c), dtype=np.int64), (r, c)), shape=(self.M, self.T))

    def __eq__(self, other):
        return isinstance(other, IndexTable) and self.T == other.T and np.array_equal(self.indices, other.indices)


@dataclass(eq=False)
class SecretMatrix:
    """``Gbar = B^m G`` (scale of G).  Holds either the dense matrix or its
    two factors; products are evaluated in the cheapest available form."""

    dense: np.ndarray | None = None
    frac_bits: int = 4
    index: IndexTable | None = field(default=None, repr=False)
    g: EncodingMatrix | None = field(default=None, repr=False)

    @property
    def values(self) -> np.ndarray:
        if self.dense is None:
            self.dense = np.asarray(self.index.matrix @ self.g.values, dtype=np.int64)
        return self.dense

    @property
    def shape(self):
        if self.dense is not None:
            return self.dense.shape
        return (self.index.M, self.g.shape[1])

    def real(self) -> np.ndarray:
        return self.values / float(1 << self.frac_bits)

    def t_matvec(self, x: np.ndarray) -> np.ndarray:
        """``Gbar^T x`` in real units."""
        x = np.asarray(x, dtype=np.float64)
        if self.dense is None:
            return self.g.real().T @ (self.index.matrix.T @ x)
        return self.real().T @ x

    def matvec(self, w: np.ndarray) -> np.ndarray:
        """``Gbar w`` in real units."""
        w = np.asarray(w, dtype=np.float64)
        if self.dense is None:
            return self.index.matrix @ (self.g.real() @ w)
        return self.real() @ w

    def gram(self) -> np.ndarray:
        if self.dense is None:
            B = self.index.matrix.astype(np.float64)
            BtB = (B.T @ B).toarray()
            G = self.g.real()
            return G.T @ BtB @ G
        R = self.real()
        return R.T @ R

    def digest(self) -> str:
        v = np.ascontiguousarray(self.values, dtype="<i8")
        h = hashlib.sha256()
        h.update(np.asarray(v.shape, dtype="<u8").tobytes())
        h.update(bytes([self.frac_bits]))
        h.update(v.tobytes())
        return h.hexdigest()


# -- generation -------------------------------------------------------------

def gen_elut(sys: SystemParams, fp: FpParams, rng: np.random.Generator) -> ELut:
    return ELut(fp.quantize(rng.normal(0.0, sys.elut_std, sys.T), fp.elut_bits), fp.frac_bits)


def gen_encoding_matrix(sys: SystemParams, fp: FpParams, rng: np.random.Generator) -> EncodingMatrix:
    # N(0, 1/L) entries give each W-LUT entry unit variance per unit amplitude
    g = rng.normal(0.0, math.sqrt(1.0 / sys.L), (sys.T, sys.L))
    return EncodingMatrix(fp.quantize(g, fp.gmat_bits), fp.frac_bits)


def gen_fingerprint(L: int, rng: np.random.Generator) -> Fingerprint:
    return Fingerprint(rng.integers(0, 2, L, dtype=np.uint8))


def _index_cipher(sk_m: bytes):
    key = hashlib.sha256(b"creams/index/" + sk_m).digest()[:16]
    return Cipher(algorithms.AES(key), modes.ECB()).encryptor()


def gen_index_table(sk_m: bytes, M: int, S: int, T: int) -> IndexTable:
    """Keyed PRF indices ``t_ih`` in ``[0, T)``.

    Block ``(i, h, j)`` (u64, u32, u32 little endian) is encrypted with
    AES-128 under a key derived from ``sk_m``; the first four output bytes
    are an unsigned integer that is accepted when below the largest multiple
    of ``T`` that fits in 32 bits, otherwise retry counter ``j`` is bumped.
    """
    if T < 1:
        raise ParameterError("T must be >= 1")
    n = M * S
    ii = np.repeat(np.arange(M, dtype=np.uint64), S)
    hh = np.tile(np.arange(S, dtype=np.uint32), M)
    out = np.empty(n, dtype=np.int64)
    pending = np.arange(n)
    limit = (2**32 // T) * T
    j = 0
    enc = _index_cipher(sk_m)
    while len(pending):
        blocks = np.zeros(len(pending), dtype=[("i", "<u8"), ("h", "<u4"), ("j", "<u4")])
        blocks["i"] = ii[pending]
        blocks["h"] = hh[pending]
        blocks["j"] = j
        ct = enc.update(blocks.tobytes())
        words = np.frombuffer(ct, dtype="<u4").reshape(-1, 4)[:, 0].astype(np.int64)
        ok = words < limit
        out[pending[ok]] = words[ok] % T
        pending = pending[~ok]
        j += 1
    return IndexTable(out.reshape(M, S), T)


def quantized_amplitude(strength: float, fp: FpParams) -> int:
    return int(fp.quantize(strength, fp.wlut_bits))


def watermark_weights(b: Fingerprint, strength: float, fp: FpParams) -> np.ndarray:
    """``w_hat_l = +-quantize(strength)`` at the base scale."""
    a = quantized_amplitude(strength, fp)
    return a * (2 * b.bits.astype(np.int64) - 1)


def gen_wlut(g: EncodingMatrix, b: Fingerprint, strength: float, fp: FpParams) -> WLut:
    w = watermark_weights(b, strength, fp)
    return WLut(g.values @ w, g.frac_bits + fp.frac_bits)


def gen_dlut(e: ELut, g: EncodingMatrix, b: Fingerprint, strength: float, fp: FpParams, exact: bool = False) -> DLut:
    """``D = -E + G w``.

    The product ``G w`` lands on the squared scale.  With ``exact`` the D-LUT
    stays there; otherwise every entry is rounded back to the base scale.
    """
    if g.frac_bits != e.frac_bits:
        raise ParameterError("E-LUT and encoding matrix scales differ")
    w2 = gen_wlut(g, b, strength, fp)
    d2 = -(e.values << fp.frac_bits) + w2.values
    if exact:
        return DLut(d2, w2.frac_bits)
    return DLut(rescale(d2, w2.frac_bits - e.frac_bits), e.frac_bits)


# -- single-value alteration and joint decryption ---------------------------

def _headroom_limit(fp: FpParams, S: int) -> int:
    return 1 << (fp.frac_bits + max(fp.media_bits, fp.elut_bits) + S.bit_length() + 1)


def encrypt_media(m: MediaVector, idx: IndexTable, e: ELut, fp: FpParams | None = None) -> MediaVector:
    """``c = m + B^m E``."""
    fp = fp or FpParams()
    if len(m) != idx.M:
        raise ParameterError(f"media length {len(m)} != index rows {idx.M}")
    if m.frac_bits != e.frac_bits:
        raise ParameterError("media and E-LUT scales differ")
    c = m.values + idx.gather_sum(e.values)
    if np.abs(c).max(initial=0) >= _headroom_limit(fp, idx.S):
        raise FixedPointOverflowError("encrypted coefficient exceeds configured headroom")
    return MediaVector(c, m.frac_bits)


def joint_decrypt_fingerprint(c: MediaVector, idx: IndexTable, d: DLut) -> MediaVector:
    """``m^k = c + B^m D``, returned at the scale of ``c``.

    A D-LUT on a finer scale is applied exactly and the sum is rounded once.
    """
    shift = d.frac_bits - c.frac_bits
    if shift < 0:
        raise ParameterError("D-LUT scale coarser than media scale")
    acc = (c.values << shift) + idx.gather_sum(d.values)
    return MediaVector(rescale(acc, shift), c.frac_bits)


def gbar(idx: IndexTable, g: EncodingMatrix, dense: bool = True) -> SecretMatrix:
    sm = SecretMatrix(None, g.frac_bits, idx, g)
    if dense:
        sm.values
    return sm


def add_noise(m: MediaVector, std: float, rng: np.random.Generator, fp: FpParams | None = None) -> MediaVector:
    fp = fp or FpParams()
    if std == 0:
        return MediaVector(m.values.copy(), m.frac_bits)
    n = round_half_away(rng.normal(0.0, std, len(m)) * (1 << m.frac_bits)).astype(np.int64)
    return MediaVector(m.values + n, m.frac_bits)


# -- detection --------------------------------------------------------------

def _delta(suspect: MediaVector, original: MediaVector) -> np.ndarray:
    if len(suspect) != len(original):
        raise DecoderError("suspect and original lengths differ")
    return suspect.real() - original.real()


def _sgn(x: np.ndarray) -> Fingerprint:
    return Fingerprint((x > 0).astype(np.uint8))


def matched_filter_statistic(suspect: MediaVector, original: MediaVector, gb: SecretMatrix) -> np.ndarray:
    return gb.t_matvec(_delta(suspect, original))


def detect_mf(suspect: MediaVector, original: MediaVector, gb: SecretMatrix) -> Fingerprint:
    return _sgn(matched_filter_statistic(suspect, original, gb))


def detect_pinv(suspect: MediaVector, original: MediaVector, gb: SecretMatrix) -> Fingerprint:
    gram = gb.gram()
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise DecoderError("secret matrix is not of full column rank")
    return _sgn(np.linalg.solve(gram, matched_filter_statistic(suspect, original, gb)))


# -- serialization ----------------------------------------------------------
#
# magic "CLUT", u8 tag, u8 frac bits, u8 magnitude bits, u8 ndim, u32 aux,
# ndim x u32 dims, then little-endian int64 payload.  ``aux`` carries T for
# index tables and is zero otherwise.

_MAGIC = b"CLUT"
_HEADER = struct.Struct("<4sBBBBI")

TAG_ELUT, TAG_GMAT, TAG_WLUT, TAG_DLUT, TAG_INDEX, TAG_MEDIA, TAG_FINGERPRINT = range(1, 8)

_KINDS = {
    ELut: (TAG_ELUT, "elut_bits"),
    EncodingMatrix: (TAG_GMAT, "gmat_bits"),
    WLut: (TAG_WLUT, "wlut_bits"),
    DLut: (TAG_DLUT, "elut_bits"),
    MediaVector: (TAG_MEDIA, "media_bits"),
}


def to_bytes(obj, fp: FpParams | None = None) -> bytes:
    fp = fp or FpParams()
    if isinstance(obj, IndexTable):
        tag, frac, mag, aux, arr = TAG_INDEX, 0, 0, obj.T, obj.indices
    elif isinstance(obj, Fingerprint):
        tag, frac, mag, aux, arr = TAG_FINGERPRINT, 0, 0, 0, obj.bits
    else:
        tag, field_name = _KINDS[type(obj)]
        tag, frac, mag, aux, arr = tag, obj.frac_bits, getattr(fp, field_name), 0, obj.values
    arr = np.ascontiguousarray(arr, dtype="<i8")
    head = _HEADER.pack(_MAGIC, tag, frac, mag, arr.ndim, aux)
    return head + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


def from_bytes(data: bytes):
    magic, tag, frac, _mag, ndim, aux = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError("not a LUT array blob")
    off = _HEADER.size
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    n = int(np.prod(shape, dtype=np.int64))
    if len(data) != off + 8 * n:
        raise ValueError("LUT array blob has wrong length")
    arr = np.frombuffer(data, dtype="<i8", count=n, offset=off).astype(np.int64).reshape(shape)
    if tag == TAG_INDEX:
        return IndexTable(arr, aux)
    if tag == TAG_FINGERPRINT:
        return Fingerprint(arr)
    cls = {TAG_ELUT: ELut, TAG_GMAT: EncodingMatrix, TAG_WLUT: WLut, TAG_DLUT: DLut, TAG_MEDIA: MediaVector}.get(tag)
    if cls is None:
        raise ValueError(f"unknown LUT array tag {tag}")
    return cls(arr, frac)
