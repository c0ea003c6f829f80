"""Command-line entry point.

    creams keygen --role user --out keys/
    creams store --state run/ --image lena --image car
    creams share --state run/ --user alice --media lena
    creams arbitrate --state run/ --media lena --suspect run/copies/alice_lena.pgm
    creams table2 --out table2.csv
    creams table3 --K 100 --out table3.csv
    creams bench --out bench.csv
    creams audit --transcript run/transcript.jsonl

A run directory holds ``state.json``, a deterministic recipe (config plus
the ordered list of protocol actions).  Entities are rebuilt from their
seeds and earlier actions are replayed before the new one executes, so
every command sees the same keys, LUTs and stores as the first.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import experiments, lut, media, pre
from . import protocol as proto

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RANGE = 3
EXIT_DECODER = 4
EXIT_PROTOCOL = 5
EXIT_AUDIT = 6


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scheme: str = "I"
    T: int = 1000
    L: int = 50
    S: int = 4
    sigma_e: float = 1000.0
    sigma_w: float = 0.6
    sigma_n: float = 0.0
    K: int = 100
    frac_bits: int = 4
    decoder: str = "mf"
    tau: int = 0
    seed: int = 0
    size: int = 64
    dlog_bound: int = pre.DEFAULT_DLOG_BOUND

    def validate(self) -> "RunConfig":
        if self.scheme not in (proto.SCHEME_I, proto.SCHEME_II):
            raise ConfigError(f"scheme must be I or II, got {self.scheme!r}")
        if self.decoder not in ("mf", "pinv"):
            raise ConfigError(f"decoder must be mf or pinv, got {self.decoder!r}")
        if self.tau < 0 or self.size % 8 or self.size <= 0:
            raise ConfigError("tau must be >= 0 and size a positive multiple of 8")
        try:
            self.system()
        except lut.ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def system(self, M: int | None = None) -> lut.SystemParams:
        return lut.SystemParams(
            T=self.T, L=self.L, S=self.S, M=M, elut_std=self.sigma_e,
            wlut_variance=self.sigma_w, noise_variance=self.sigma_n, K=self.K,
        )

    def fixed_point(self) -> lut.FpParams:
        return lut.FpParams(frac_bits=self.frac_bits)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        if k not in _FIELD_TYPES:
            raise ConfigError(f"line {n}: unknown key {k!r}")
        try:
            out[k] = _CASTS[_FIELD_TYPES[k]](v)
        except ValueError as exc:
            raise ConfigError(f"line {n}: bad value for {k}: {v!r}") from exc
    return out


def load_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_text(Path(args.config).read_text()))
    for k in _FIELD_TYPES:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return RunConfig(**values).validate()


# -- replayable run state ---------------------------------------------------

class World(proto.Deployment):
    """A deployment plus the pictures it stores, built from a run config."""

    def __init__(self, cfg: RunConfig):
        super().__init__(cfg.scheme, cfg.system(), cfg.fixed_point(), cfg.seed, cfg.dlog_bound)
        self.cfg = cfg
        self.images: dict[str, media.GrayImage] = {}

    def store_images(self, specs: list[str]) -> None:
        catalog = {}
        for spec in specs:
            name, img = experiments.resolve_image(spec, self.cfg.size)
            self.images[name] = img
            catalog[name] = media.to_coefficients(img, self.fp)
        self.store(catalog)


def _state_path(d) -> Path:
    return Path(d) / "state.json"


def load_world(state_dir) -> tuple[World, dict]:
    p = _state_path(state_dir)
    if not p.exists():
        raise ConfigError(f"{state_dir}: no state.json; run 'store' first")
    state = json.loads(p.read_text())
    w = World(RunConfig(**state["config"]).validate())
    for action in state["actions"]:
        if action["op"] == "store":
            w.store_images(action["images"])
        elif action["op"] == "share":
            w.share(action["user"], action["media"])
        elif action["op"] == "arbitrate":
            suspect = media.to_coefficients(media.load_pgm(action["suspect"]), w.fp)
            w.arbitrate(action["media"], suspect, action["decoder"], action["tau"])
    return w, state


def save_state(state_dir, state: dict, w: World) -> None:
    d = Path(state_dir)
    d.mkdir(parents=True, exist_ok=True)
    _state_path(d).write_text(json.dumps(state, indent=1, sort_keys=True) + "\n")
    (d / "transcript.jsonl").write_text(w.net.transcript.dumps())


# -- commands ---------------------------------------------------------------

def cmd_keygen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = pre.setup(b"creams", args.dlog_bound or pre.DEFAULT_DLOG_BOUND)
    rng = random.Random(args.seed) if args.seed is not None else None
    kp = pre.keygen(params, rng)
    (out / "params.bin").write_bytes(params.to_bytes())
    (out / f"{args.role}.pk").write_bytes(kp.pk.to_bytes())
    (out / f"{args.role}.sk").write_bytes(kp.sk.to_bytes())
    print(f"{args.role} key {kp.pk.key_id.hex()} written to {out}")
    return EXIT_OK


def cmd_store(args) -> int:
    cfg = load_config(args)
    if _state_path(args.state).exists():
        w, state = load_world(args.state)
    else:
        w, state = World(cfg), {"config": cfg.__dict__, "actions": []}
    specs = args.image or ["lena"]
    w.store_images(specs)
    state["actions"].append({"op": "store", "images": specs})
    save_state(args.state, state, w)
    print(f"stored {', '.join(s.split('=', 1)[0] for s in specs)} under scheme {w.cfg.scheme}")
    return EXIT_OK


def cmd_share(args) -> int:
    w, state = load_world(args.state)
    mk = w.share(args.user, args.media)
    state["actions"].append({"op": "share", "user": args.user, "media": args.media})
    save_state(args.state, state, w)
    img = w.images[args.media]
    out = Path(args.state) / "copies" / f"{args.user}_{args.media}.pgm"
    out.parent.mkdir(parents=True, exist_ok=True)
    copy = media.from_coefficients(mk, img.width, img.height)
    media.save_pgm(copy, out)
    print(f"{args.user} received {args.media}: {out} (PSNR {media.psnr(img, copy):.3f} dB)")
    return EXIT_OK


def cmd_arbitrate(args) -> int:
    w, state = load_world(args.state)
    decoder = args.decoder or w.cfg.decoder
    tau = w.cfg.tau if args.tau is None else args.tau
    suspect = media.to_coefficients(media.load_pgm(args.suspect), w.fp)
    v = w.arbitrate(args.media, suspect, decoder, tau)
    report = {"media": v.media_id, "users": v.users, "ambiguous": v.ambiguous,
              "distances": v.distances, "decoder": decoder, "tau": tau}
    state["actions"].append({"op": "arbitrate", "media": args.media, "suspect": str(Path(args.suspect).resolve()),
                             "decoder": decoder, "tau": tau})
    save_state(args.state, state, w)
    (Path(args.state) / "verdict.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _emit(text: str, out) -> None:
    if out:
        experiments.write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_table2(args) -> int:
    cfg = load_config(args)
    rows = experiments.table2(
        images=args.image or experiments.IMAGES, seeds=range(args.seeds),
        sys=cfg.system(), fp=cfg.fixed_point(), size=args.image_size, workers=args.workers,
    )
    _emit(experiments.rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_table3(args) -> int:
    cfg = load_config(args)
    K = 500 if args.full else cfg.K
    rows = experiments.table3(
        images=args.image or experiments.IMAGES, K=K, seed=cfg.seed, decoder=cfg.decoder,
        sys=cfg.system(), fp=cfg.fixed_point(), size=args.image_size, workers=args.workers,
    )
    _emit(experiments.rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args)
    results = []
    for size, T in zip(args.sizes, args.lut_sizes):
        for scheme in (proto.SCHEME_I, proto.SCHEME_II):
            results.append(experiments.bench(scheme, size=size, T=T, L=cfg.L, seed=cfg.seed,
                                              fp=cfg.fixed_point(), strength_variance=cfg.sigma_w))
    _emit(experiments.bench_csv(results), args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    t = proto.Transcript.loads(Path(args.transcript).read_text())
    report = proto.transcript_audit(t)
    print(report.format())
    return EXIT_OK if report.ok else EXIT_AUDIT


# -- parser -----------------------------------------------------------------

def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--scheme", choices=("I", "II"))
    p.add_argument("--T", type=int, help="LUT length")
    p.add_argument("--L", type=int, help="fingerprint length")
    p.add_argument("--S", type=int, help="LUT entries per coefficient")
    p.add_argument("--sigma-e", dest="sigma_e", type=float, help="E-LUT standard deviation")
    p.add_argument("--sigma-w", dest="sigma_w", type=float, help="W-LUT variance")
    p.add_argument("--sigma-n", dest="sigma_n", type=float, help="noise variance")
    p.add_argument("--K", type=int, help="number of users")
    p.add_argument("--frac-bits", dest="frac_bits", type=int)
    p.add_argument("--decoder", choices=("mf", "pinv"))
    p.add_argument("--tau", type=int, help="Hamming-distance match threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, help="side of the built-in protocol pictures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="creams", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate one entity's key pair")
    p.add_argument("--role", required=True, choices=("owner", "user", "judge", "cloud"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="deterministic key (testing only)")
    p.add_argument("--dlog-bound", dest="dlog_bound", type=int)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("store", help="owner uploads pictures to the cloud (part 1)")
    p.add_argument("--state", required=True, help="run directory")
    p.add_argument("--image", action="append", help="built-in name or name=path.pgm (repeatable)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("share", help="authorize a user and deliver a fingerprinted copy (part 2)")
    p.add_argument("--state", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--media", required=True)
    p.set_defaults(func=cmd_share)

    p = sub.add_parser("arbitrate", help="identify the source of a suspect copy (part 3)")
    p.add_argument("--state", required=True)
    p.add_argument("--media", required=True)
    p.add_argument("--suspect", required=True, help="suspect picture (PGM)")
    p.add_argument("--decoder", choices=("mf", "pinv"))
    p.add_argument("--tau", type=int)
    p.set_defaults(func=cmd_arbitrate)

    for name, fn, helptext in (
        ("table2", cmd_table2, "PSNR of fingerprinted copies against embedding strength"),
        ("table3", cmd_table3, "traitor-tracking success rate against strength and noise"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--image", action="append", help="built-in name or name=path.pgm (repeatable)")
        p.add_argument("--image-size", dest="image_size", type=int, default=512)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="CSV path (default stdout)")
        _add_run_flags(p)
        p.set_defaults(func=fn)
        if name == "table2":
            p.add_argument("--seeds", type=int, default=5, help="runs averaged per cell")
        else:
            p.add_argument("--full", action="store_true", help="use K=500 users")

    p = sub.add_parser("bench", help="per-role operation counts for one sharing session")
    p.add_argument("--sizes", type=_int_list, default=[32, 64], help="picture sides, comma separated")
    p.add_argument("--lut-sizes", dest="lut_sizes", type=_int_list, default=[500, 1000],
                   help="LUT lengths paired with --sizes")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="check a transcript for confidentiality and provenance violations")
    p.add_argument("--transcript", required=True)
    p.set_defaults(func=cmd_audit)
    return ap


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(json.dumps({"error": kind, "detail": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, lut.ParameterError, pre.ConfigurationError, media.ImageFormatError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (pre.RangeError, pre.PlaintextOverflowError, lut.FixedPointOverflowError) as exc:
        return _fail(EXIT_RANGE, "crypto-range", exc)
    except lut.DecoderError as exc:
        return _fail(EXIT_DECODER, "decoder", exc)
    except proto.ProtocolError as exc:
        return _fail(EXIT_PROTOCOL, "protocol", exc)


if __name__ == "__main__":
    sys.exit(main())
