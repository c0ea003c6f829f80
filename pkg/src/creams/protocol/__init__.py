"""Four-entity protocol engine: owner, cloud, user and judge."""

from .audit import AuditPolicy, AuditReport, Violation, transcript_audit
from .deployment import Deployment
from .entities import Cloud, Judge, Owner, UnknownMediaError, User, Verdict
from .flows import (
    arbitrate,
    authorize,
    creams1_part1,
    creams1_part2,
    creams1_part3,
    creams2_part1,
    creams2_part2,
    creams2_part3,
)
from .network import (
    SCHEME_I,
    SCHEME_II,
    SCRIPTS,
    AuthorizationError,
    Network,
    ProtocolError,
    Record,
    Transcript,
    script_of,
)
