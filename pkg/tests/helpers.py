import numpy as np

from creams import lut


def small_media(M, seed=0, scale=200.0, fp=None):
    fp = fp or lut.FpParams()
    r = np.random.default_rng(seed)
    return lut.MediaVector(fp.quantize(r.normal(0, scale, M), fp.media_bits), fp.frac_bits)


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
