"""Perceptual-quality, traitor-tracking and cost experiments.

Table-style runs at 512x512 use the plaintext fixed-point path.  The
ciphertext-domain scheme decrypts to exactly the same integers as the
plaintext path with an exact (squared-scale) D-LUT, so its column is computed
that way; the per-entry rounded D-LUT gives the classic AFP column.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import lut, media
from . import protocol as proto

SIGMA_W_GRID = (0.01, 0.05, 0.1, 0.3, 0.6)
SIGMA_N_GRID = (0.1, 0.5)
IMAGES = ("baboon", "pirate", "lena", "car")
CSV_FIELDS = ("image", "method", "sigma_w", "sigma_n", "decoder", "runs", "psnr_db", "success_rate")

METHOD_AFP = "afp"
METHOD_CREAMS2 = "creams2"


IMAGE_DIR_ENV = "CREAMS_IMAGE_DIR"


def resolve_image(spec: str, size: int = 512) -> tuple[str, media.GrayImage]:
    """``name=path.pgm`` loads a file.

    A bare ``name`` loads ``$CREAMS_IMAGE_DIR/name.pgm`` when that file exists
    and has the requested side, otherwise the synthetic stand-in is used.
    """
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, media.load_pgm(path)
    d = os.environ.get(IMAGE_DIR_ENV)
    if d and (Path(d) / f"{spec}.pgm").is_file():
        img = media.load_pgm(Path(d) / f"{spec}.pgm")
        if img.width == img.height == size:
            return spec, img
    return spec, media.synthetic_image(spec, size)


def _seed(*parts) -> np.random.SeedSequence:
    h = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return np.random.SeedSequence(int.from_bytes(h[:16], "little"))


def _sk_m(*parts) -> bytes:
    return hashlib.sha256(("sk_m/" + "/".join(str(p) for p in parts)).encode()).digest()[:16]


@dataclass
class Instance:
    """One owner-side setup for one picture: LUTs, index table, masked media."""

    m: lut.MediaVector
    e: lut.ELut
    g: lut.EncodingMatrix
    idx: lut.IndexTable
    c: lut.MediaVector
    width: int
    height: int
    _gbar: lut.SecretMatrix | None = field(default=None, repr=False)

    @property
    def gbar(self) -> lut.SecretMatrix:
        if self._gbar is None:
            self._gbar = lut.gbar(self.idx, self.g, dense=False)
        return self._gbar


def make_instance(img: media.GrayImage, sys: lut.SystemParams, fp: lut.FpParams, *seed_parts) -> Instance:
    rng = np.random.default_rng(_seed("instance", *seed_parts))
    m = media.to_coefficients(img, fp)
    e = lut.gen_elut(sys, fp, rng)
    g = lut.gen_encoding_matrix(sys, fp, rng)
    idx = lut.gen_index_table(_sk_m(*seed_parts), len(m), sys.S, sys.T)
    c = lut.encrypt_media(m, idx, e, fp)
    return Instance(m, e, g, idx, c, img.width, img.height)


def fingerprinted(inst: Instance, b: lut.Fingerprint, strength: float, fp: lut.FpParams, method: str) -> lut.MediaVector:
    exact = method == METHOD_CREAMS2
    d = lut.gen_dlut(inst.e, inst.g, b, strength, fp, exact=exact)
    return lut.joint_decrypt_fingerprint(inst.c, inst.idx, d)


def encryption_psnr(img: media.GrayImage, sys: lut.SystemParams | None = None, fp: lut.FpParams | None = None, seed=0) -> float:
    """PSNR of the LUT-masked picture against the original."""
    sys = sys or lut.SystemParams()
    fp = fp or lut.FpParams()
    inst = make_instance(img, sys, fp, seed, "encryption")
    return media.psnr(img, media.from_coefficients(inst.c, img.width, img.height))


# -- Table II ---------------------------------------------------------------

def _table2_cell(args):
    name, img, sys, fp, seed, sigma_ws = args
    inst = make_instance(img, sys, fp, seed, name)
    rng = np.random.default_rng(_seed("fingerprint", seed, name))
    b = lut.gen_fingerprint(sys.L, rng)
    out = []
    for sw in sigma_ws:
        strength = replace(sys, wlut_variance=sw).w_amplitude
        for method in (METHOD_AFP, METHOD_CREAMS2):
            mk = fingerprinted(inst, b, strength, fp, method)
            out.append((name, method, sw, media.psnr(img, media.from_coefficients(mk, inst.width, inst.height))))
    return out


def _pool_map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs))


def table2(images=IMAGES, sigma_ws=SIGMA_W_GRID, seeds=range(5), sys: lut.SystemParams | None = None,
           fp: lut.FpParams | None = None, size: int = 512, workers: int = 1) -> list[dict]:
    """Mean PSNR (dB) of fingerprinted copies, per picture, strength and method."""
    sys = sys or lut.SystemParams()
    fp = fp or lut.FpParams()
    seeds = list(seeds)
    jobs = []
    for spec in images:
        name, img = resolve_image(spec, size)
        jobs += [(name, img, sys, fp, s, tuple(sigma_ws)) for s in seeds]
    acc: dict[tuple, list[float]] = {}
    for cell in _pool_map(_table2_cell, jobs, workers):
        for name, method, sw, p in cell:
            acc.setdefault((name, method, sw), []).append(p)
    rows = [
        _row(name, method, sw, 0.0, "", len(v), psnr_db=float(np.mean(v)))
        for (name, method, sw), v in acc.items()
    ]
    return sort_rows(rows)


# -- Table III --------------------------------------------------------------

def _table3_cell(args):
    name, img, sys, fp, seed, sigma_n, sigma_ws, decoder, K, methods = args
    inst = make_instance(img, sys, fp, seed, name)
    detect = lut.detect_pinv if decoder == "pinv" else lut.detect_mf
    fp_rng = np.random.default_rng(_seed("users", seed, name))
    users = [lut.gen_fingerprint(sys.L, fp_rng) for _ in range(K)]
    hits = {(method, sw): 0 for method in methods for sw in sigma_ws}
    noise_std = replace(sys, noise_variance=sigma_n).noise_std
    for k, b in enumerate(users):
        # identical noise across strengths so the grid is directly comparable
        noise_seed = _seed("noise", seed, name, sigma_n, k)
        for method, sw in hits:
            strength = replace(sys, wlut_variance=sw).w_amplitude
            mk = fingerprinted(inst, b, strength, fp, method)
            suspect = lut.add_noise(mk, noise_std, np.random.default_rng(noise_seed), fp)
            if detect(suspect, inst.m, inst.gbar) == b:
                hits[(method, sw)] += 1
    return [(name, method, sigma_n, sw, n, K) for (method, sw), n in hits.items()]


def table3(images=IMAGES, sigma_ws=SIGMA_W_GRID, sigma_ns=SIGMA_N_GRID, K: int = 100, seed: int = 0,
           decoder: str = "mf", methods=(METHOD_AFP, METHOD_CREAMS2), sys: lut.SystemParams | None = None,
           fp: lut.FpParams | None = None, size: int = 512, workers: int = 1) -> list[dict]:
    """Fraction of ``K`` users recovered without a single bit error."""
    sys = sys or lut.SystemParams()
    fp = fp or lut.FpParams()
    jobs = []
    for spec in images:
        name, img = resolve_image(spec, size)
        jobs += [(name, img, sys, fp, seed, sn, tuple(sigma_ws), decoder, K, tuple(methods)) for sn in sigma_ns]
    rows = []
    for cell in _pool_map(_table3_cell, jobs, workers):
        for name, method, sn, sw, hits, k in cell:
            rows.append(_row(name, method, sw, sn, decoder, k, success_rate=hits / k))
    return sort_rows(rows)


# -- CSV --------------------------------------------------------------------

def _row(image, method, sw, sn, decoder, runs, psnr_db=None, success_rate=None) -> dict:
    return {
        "image": image, "method": method, "sigma_w": sw, "sigma_n": sn, "decoder": decoder,
        "runs": runs, "psnr_db": psnr_db, "success_rate": success_rate,
    }


def sort_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (r["image"], r["method"], r["decoder"], r["sigma_n"], r["sigma_w"]))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        for k in ("sigma_w", "sigma_n", "psnr_db", "success_rate"):
            r[k] = float(r[k]) if r[k] != "" else None
        r["runs"] = int(r["runs"])
        out.append(r)
    return out


# -- operation-count benchmark ----------------------------------------------

@dataclass
class BenchResult:
    scheme: str
    T: int
    L: int
    M: int
    S: int
    index_ones: int  # nonzero entries of the binary selection matrix
    gmat_nonzero: int
    counts: dict[str, dict[str, int]]  # role -> counter snapshot for Part 2
    seconds: float = 0.0


def bench(scheme: str, size: int = 64, T: int = 1000, L: int = 50, seed: int = 0,
          fp: lut.FpParams | None = None, strength_variance: float = 0.6) -> BenchResult:
    """Run storage plus one sharing session and report Part-2 costs per role."""
    fp = fp or lut.FpParams()
    sys = lut.SystemParams(T=T, L=L, wlut_variance=strength_variance)
    dep = proto.Deployment(scheme, sys, fp, seed)
    owner, cloud, user = dep.owner, dep.cloud, dep.user("user-0")
    dep.store({"img": media.to_coefficients(media.synthetic_image("lena", size), fp)})
    proto.authorize(scheme, owner, user, "img")
    for ent in (owner, cloud, user):
        ent.counter.reset()
    t0 = time.perf_counter()
    dep.share("user-0", "img", authorized=False)
    dt = time.perf_counter() - t0
    rec = cloud.media["img"]
    return BenchResult(
        scheme, T, L, rec.index.M, sys.S, int(rec.index.matrix.nnz), int(np.count_nonzero(cloud.g.values)),
        {e.role: e.counter.as_dict() | {"exponentiations": e.counter.exponentiations,
                                        "homomorphic_ops": e.counter.homomorphic_ops}
         for e in (owner, cloud, user)},
        dt,
    )


BENCH_FIELDS = ("scheme", "T", "L", "M", "role", "messages_sent", "bytes_sent", "exponentiations",
                "pairing", "gt_mul", "homomorphic_ops", "dlog", "bytes_stored")


def bench_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_FIELDS)
    for r in results:
        for role in ("owner", "cloud", "user"):
            c = r.counts[role]
            w.writerow([r.scheme, r.T, r.L, r.M, role] + [c[k] for k in BENCH_FIELDS[5:]])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
