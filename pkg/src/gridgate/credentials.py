"""Proxy credential loading, validation, and delegation.

Credentials are structured JSON documents with an opaque token, not real
X.509 material: the security model exercised here is the workflow (load a
user credential, gate portal access on it, hand each job a one-level
delegation), not a cipher suite. Delegated tokens are derived with an
HMAC-SHA256 keyed on the parent token, so a chain can be re-derived but
never shortened.
"""

from __future__ import annotations

import hmac
import hashlib
import json
import os
import secrets
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path

from .errors import InvalidParent, MalformedCredential, NotFound
from .model import format_ts, parse_ts, utcnow

ENV_PROXY_DIR = "GRIDGATE_PROXY_DIR"
DEFAULT_PROXY_DIR = "~/.gridgate"
CREDENTIAL_FILENAME = "proxy.json"
MAX_DELEGATION_DEPTH = 10


class Validity(Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    CHAIN_TOO_DEEP = "ChainTooDeep"


@dataclass(frozen=True)
class ProxyCredential:
    subject: str
    issuer_chain: tuple[str, ...]
    not_after: datetime
    token: str

    @property
    def depth(self) -> int:
        return len(self.issuer_chain)

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "issuer_chain": list(self.issuer_chain),
            "not_after": format_ts(self.not_after),
            "token": self.token,
        }

    @staticmethod
    def from_json(obj: dict) -> ProxyCredential:
        try:
            cred = ProxyCredential(
                subject=str(obj["subject"]),
                issuer_chain=tuple(str(s) for s in obj["issuer_chain"]),
                not_after=parse_ts(obj["not_after"]),
                token=str(obj["token"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCredential(f"bad credential document: {exc!r}") from None
        if not cred.issuer_chain:
            raise MalformedCredential("issuer_chain must not be empty")
        return cred


def resolve_proxy_dir(directory: str | Path | None = None) -> Path:
    if directory is None:
        directory = os.environ.get(ENV_PROXY_DIR, DEFAULT_PROXY_DIR)
    return Path(directory).expanduser()


def load_credential(directory: str | Path | None = None) -> ProxyCredential:
    """Read <dir>/proxy.json; expiry is NOT checked here (see validate)."""
    path = resolve_proxy_dir(directory) / CREDENTIAL_FILENAME
    if not path.is_file():
        raise NotFound(f"no credential at {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise MalformedCredential(f"unreadable credential at {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedCredential(f"credential at {path} is not a JSON object")
    return ProxyCredential.from_json(obj)


def save_credential(cred: ProxyCredential, directory: str | Path) -> Path:
    """Write <dir>/proxy.json (bootstrap helper for demos and tests)."""
    directory = Path(directory).expanduser()
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CREDENTIAL_FILENAME
    path.write_text(json.dumps(cred.to_json(), indent=2) + "\n", encoding="utf-8")
    return path


def fetch_credential(url: str, timeout: float = 5.0) -> ProxyCredential:
    """Retrieve the same JSON document over HTTP (off by default; the portal
    only uses this when its config names a proxy_url)."""
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        obj = json.loads(resp.read().decode("utf-8"))
    if not isinstance(obj, dict):
        raise MalformedCredential(f"credential endpoint {url} returned non-object")
    return ProxyCredential.from_json(obj)


def issue(subject: str, lifetime: timedelta, now: datetime | None = None) -> ProxyCredential:
    """Mint a root credential (stand-in for grid-proxy-init)."""
    now = now or utcnow()
    return ProxyCredential(
        subject=subject,
        issuer_chain=(subject,),
        not_after=now + lifetime,
        token=secrets.token_hex(16),
    )


def validate(cred: ProxyCredential, now: datetime | None = None) -> Validity:
    now = now or utcnow()
    if now >= cred.not_after:
        return Validity.EXPIRED
    if cred.depth > MAX_DELEGATION_DEPTH:
        return Validity.CHAIN_TOO_DEEP
    return Validity.VALID


def delegate(cred: ProxyCredential, lifetime: timedelta,
             now: datetime | None = None) -> ProxyCredential:
    """One-level delegation: chain grows by the parent subject, expiry is
    capped by the parent, and the child token is HMAC(parent token, context)."""
    now = now or utcnow()
    if validate(cred, now) is not Validity.VALID:
        raise InvalidParent(f"cannot delegate from a {validate(cred, now).value} credential")
    not_after = min(cred.not_after, now + lifetime)
    chain = cred.issuer_chain + (cred.subject,)
    context = f"{cred.subject}|{len(chain)}|{format_ts(not_after)}"
    token = hmac.new(cred.token.encode(), context.encode(), hashlib.sha256).hexdigest()
    return ProxyCredential(
        subject=cred.subject,
        issuer_chain=chain,
        not_after=not_after,
        token=token,
    )
