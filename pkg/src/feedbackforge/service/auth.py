"""Static bearer-token authentication with per-route role checks.

Tokens are opaque strings assigned per user by an admin; optional expiry.
Handlers get the resolved User; fine-grained ownership rules (a student
reading only their own data) live in the handlers themselves.
"""
from __future__ import annotations

from fastapi import Depends, Request
from fastapi.security.utils import get_authorization_scheme_param

from ..errors import AccessError
from ..model import User, utcnow


class AuthError(Exception):
    """401: missing, unknown, or expired credential."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


def resolve_user(request: Request) -> User:
    relational = request.app.state.relational
    scheme, token = get_authorization_scheme_param(
        request.headers.get("Authorization", ""))
    if not token or scheme.lower() != "bearer":
        raise AuthError("missing bearer token")
    found = relational.user_by_token(token)
    if found is None:
        raise AuthError("unknown token")
    user, expires_at = found
    if expires_at is not None and expires_at <= utcnow():
        raise AuthError("token expired")
    return user


def require_role(*roles: str):
    def dependency(user: User = Depends(resolve_user)) -> User:
        if user.role not in roles:
            raise AccessError(
                f"role {user.role!r} may not call this route")
        return user

    return dependency
