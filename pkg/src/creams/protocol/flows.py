"""Scripted protocol parts, one function per part."""

from __future__ import annotations

from .. import lut
from .entities import Cloud, Judge, Owner, User, Verdict
from .network import SCHEME_I, SCHEME_II, AuthorizationError


def _store(scheme, owner: Owner, cloud: Cloud, catalog: dict[str, lut.MediaVector]) -> str:
    session = owner.net.new_session(scheme, "part1")
    owner.store(scheme, session, catalog)
    cloud.store(scheme, session)
    return session


def creams1_part1(owner: Owner, cloud: Cloud, catalog: dict[str, lut.MediaVector]) -> str:
    """Media storage with LUT-masked media."""
    return _store(SCHEME_I, owner, cloud, catalog)


def creams2_part1(owner: Owner, cloud: Cloud, catalog: dict[str, lut.MediaVector]) -> str:
    """Media storage with PRE-encrypted media; the cloud applies the E-LUT."""
    return _store(SCHEME_II, owner, cloud, catalog)


def authorize(scheme: str, owner: Owner, user: User, media_id: str) -> str:
    session = owner.net.new_session(scheme, "authorize")
    user.request_access(scheme, session, media_id, owner.id)
    owner.grant(scheme, session)
    user.receive_token()
    return session


def _share(scheme, owner: Owner, cloud: Cloud, user: User, media_id: str, judge_id: str) -> lut.MediaVector:
    if media_id not in user.tokens:
        raise AuthorizationError(f"user {user.id!r} has no authorization token for {media_id!r}")
    session = owner.net.new_session(scheme, "part2")
    user.submit(scheme, session, media_id, cloud.id, judge_id)
    owner.delegate(scheme, session, user.id, media_id)
    cloud.serve(scheme, session, user.id)
    return user.finish(scheme)


def creams1_part2(owner: Owner, cloud: Cloud, user: User, media_id: str, judge_id: str = "judge") -> lut.MediaVector:
    """Media sharing: the user receives an encrypted D-LUT and decrypts locally."""
    return _share(SCHEME_I, owner, cloud, user, media_id, judge_id)


def creams2_part2(owner: Owner, cloud: Cloud, user: User, media_id: str, judge_id: str = "judge") -> lut.MediaVector:
    """Media sharing: the cloud fingerprints in the ciphertext domain."""
    return _share(SCHEME_II, owner, cloud, user, media_id, judge_id)


def arbitrate(scheme: str, owner: Owner, judge: Judge, cloud: Cloud, media_id: str, suspect: lut.MediaVector,
              decoder: str = "mf", tau: int = 0) -> Verdict:
    session = owner.net.new_session(scheme, "part3")
    cloud.provide_evidence(scheme, session, media_id, owner.id)
    owner.request_arbitration(scheme, session, media_id, suspect, judge.id, decoder, tau)
    verdict = judge.arbitrate(scheme, session, owner.id)
    owner.receive_verdict()
    return verdict


def creams1_part3(owner, judge, cloud, media_id, suspect, decoder="mf", tau=0) -> Verdict:
    return arbitrate(SCHEME_I, owner, judge, cloud, media_id, suspect, decoder, tau)


def creams2_part3(owner, judge, cloud, media_id, suspect, decoder="mf", tau=0) -> Verdict:
    return arbitrate(SCHEME_II, owner, judge, cloud, media_id, suspect, decoder, tau)
