"""Checks a transcript against the confidentiality and provenance rules.

Rules:

``plaintext_secret``
    no message to the owner or the cloud carries a fingerprint, D-LUT or
    fingerprinted copy outside PRE encryption.
``owner_exposure``
    the owner never receives such a payload in a form it could open, i.e.
    in plaintext or encrypted under its own key.
``dlut_to_user``
    in the ciphertext-domain scheme no D-LUT is ever delivered to a user.
``fingerprint_provenance``
    per user, every fingerprint-set entry and every D-LUT derivation
    traces to the single encrypted fingerprint that user submitted.
``script``
    each session's messages follow the scripted order exactly.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .network import SCHEME_II, SCRIPTS, Record, Transcript, script_of
from .payloads import DLUT, REGISTRY


@dataclass
class Violation:
    rule: str
    index: int  # position in the transcript, -1 for whole-run findings
    detail: str


@dataclass
class AuditPolicy:
    owner_key_ids: set[str] | None = None
    check_script: bool = True


@dataclass
class AuditReport:
    violations: list[Violation] = field(default_factory=list)
    records: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def format(self) -> str:
        if self.ok:
            return f"audit passed: {self.records} records, no violations"
        lines = [f"audit failed: {len(self.violations)} violation(s) in {self.records} records"]
        lines += [f"  [{v.rule}] record {v.index}: {v.detail}" for v in self.violations]
        return "\n".join(lines)


def _owner_keys(records: list[Record]) -> set[str]:
    keys = set()
    for r in records:
        if r.kind != "message":
            continue
        if r.payload_type == "enc_elut" and r.sender == "owner":
            keys.update(r.key_ids)
        if r.payload_type == "rekey_owner":
            keys.add(r.refs.get("delegator", ""))
    keys.discard("")
    return keys


def _check_messages(records, owner_keys, out: list[Violation]) -> None:
    for i, r in enumerate(records):
        if r.kind != "message":
            continue
        cls = REGISTRY.get(r.payload_type)
        if cls is None:
            out.append(Violation("unknown_payload", i, f"payload type {r.payload_type!r}"))
            continue
        carries = cls.CARRIES
        if not carries:
            continue
        what = ", ".join(sorted(carries))
        if r.recipient in ("owner", "cloud") and not cls.ENCRYPTED:
            out.append(Violation("plaintext_secret", i, f"{r.sender} sent plaintext {what} to {r.recipient}"))
        if r.recipient == "owner" and (not cls.ENCRYPTED or owner_keys & set(r.key_ids)):
            out.append(Violation("owner_exposure", i, f"owner can open {r.payload_type} ({what})"))
        if r.scheme == SCHEME_II and r.recipient == "user" and DLUT in carries:
            out.append(Violation("dlut_to_user", i, f"{r.payload_type} delivered to user {r.recipient_id}"))


def _check_provenance(records, out: list[Violation]) -> None:
    submitted: dict[str, set[str]] = defaultdict(set)
    first_index: dict[str, int] = {}
    for i, r in enumerate(records):
        if r.kind == "message" and r.payload_type == "enc_fingerprint":
            uid = r.refs.get("user_id", r.sender_id)
            submitted[uid].add(r.refs.get("enc_b", ""))
            first_index.setdefault(uid, i)
    for uid, srcs in submitted.items():
        if len(srcs) > 1:
            out.append(Violation(
                "fingerprint_provenance", first_index[uid],
                f"user {uid} submitted {len(srcs)} different encrypted fingerprints",
            ))
    for i, r in enumerate(records):
        if r.kind != "derive":
            continue
        uid = r.refs.get("user_id", "")
        src = r.refs.get("source", "")
        if src not in submitted.get(uid, set()):
            out.append(Violation(
                "fingerprint_provenance", i,
                f"{r.payload_type} for user {uid} derives from {src[:12] or 'nothing'}, "
                "not from the user's stored encrypted fingerprint",
            ))


def _check_script(records, out: list[Violation]) -> None:
    sessions: dict[str, list[tuple[int, Record]]] = defaultdict(list)
    for i, r in enumerate(records):
        if r.kind == "message":
            sessions[r.session].append((i, r))
    for sid, items in sessions.items():
        first = items[0][1]
        expected = SCRIPTS.get((first.scheme, first.part))
        got = script_of([r for _, r in items])
        if expected is None:
            out.append(Violation("script", items[0][0], f"session {sid}: no script for {first.scheme}/{first.part}"))
        elif got != expected:
            bad = next((k for k, (a, b) in enumerate(zip(got, expected)) if a != b), min(len(got), len(expected)))
            idx = items[bad][0] if bad < len(items) else items[-1][0]
            out.append(Violation("script", idx, f"session {sid}: message {bad + 1} deviates from the {first.scheme}/{first.part} script"))


def transcript_audit(transcript: Transcript, policy: AuditPolicy | None = None) -> AuditReport:
    policy = policy or AuditPolicy()
    records = transcript.records
    owner_keys = policy.owner_key_ids if policy.owner_key_ids is not None else _owner_keys(records)
    out: list[Violation] = []
    _check_messages(records, owner_keys, out)
    _check_provenance(records, out)
    if policy.check_script:
        _check_script(records, out)
    return AuditReport(out, len(records))
