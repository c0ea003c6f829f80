"""One owner, one cloud, one judge and any number of users on a shared bus."""

from __future__ import annotations

import random

import numpy as np

from .. import lut, pre
from .entities import Cloud, Judge, Owner, User, Verdict
from .flows import arbitrate, authorize, creams1_part1, creams1_part2, creams2_part1, creams2_part2
from .network import SCHEME_I, Network


class Deployment:
    """Deterministic wiring of the four roles.

    Every entity draws keys and randomness from streams derived from
    ``seed`` and its id, so two deployments with the same seed and the same
    call sequence produce identical keys, LUTs and copies.
    """

    def __init__(self, scheme: str = SCHEME_I, sys: lut.SystemParams | None = None,
                 fp: lut.FpParams | None = None, seed: int = 0, dlog_bound: int = pre.DEFAULT_DLOG_BOUND,
                 params: pre.PublicParams | None = None):
        self.scheme = scheme
        self.sys = sys or lut.SystemParams()
        self.fp = fp or lut.FpParams()
        self.seed = seed
        self.params = params or pre.setup(b"creams", dlog_bound)
        self.net = Network()
        self.owner = Owner("owner", self.params, self.net, self.sys, self.fp,
                           np.random.default_rng([seed, 1]), random.Random(f"{seed}/owner"))
        self.cloud = Cloud("cloud", self.params, self.net, self.fp, self.sys.w_amplitude,
                           random.Random(f"{seed}/cloud"))
        self.judge = Judge("judge", self.params, self.net, random.Random(f"{seed}/judge"))
        self.users: dict[str, User] = {}

    def user(self, uid: str, fingerprint: lut.Fingerprint | None = None) -> User:
        if uid not in self.users:
            self.users[uid] = User(uid, self.params, self.net, self.fp, self.sys.L,
                                   np.random.default_rng(list(uid.encode()) + [self.seed]),
                                   random.Random(f"{self.seed}/user/{uid}"), fingerprint=fingerprint)
        return self.users[uid]

    def store(self, catalog: dict[str, lut.MediaVector]) -> str:
        run = creams1_part1 if self.scheme == SCHEME_I else creams2_part1
        return run(self.owner, self.cloud, catalog)

    def share(self, uid: str, media_id: str, authorized: bool = True) -> lut.MediaVector:
        u = self.user(uid)
        if authorized:
            authorize(self.scheme, self.owner, u, media_id)
        run = creams1_part2 if self.scheme == SCHEME_I else creams2_part2
        return run(self.owner, self.cloud, u, media_id, self.judge.id)

    def arbitrate(self, media_id: str, suspect: lut.MediaVector, decoder: str = "mf", tau: int = 0) -> Verdict:
        return arbitrate(self.scheme, self.owner, self.judge, self.cloud, media_id, suspect, decoder, tau)
