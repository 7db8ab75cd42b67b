# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Exception types shared by all Envelopes modules.
"""


class EnvelopesError(Exception):
    """Base class for all Envelopes errors."""


class DomainError(EnvelopesError, ValueError):
    """An argument lies outside the domain of an operation."""


class ResourceError(EnvelopesError, RuntimeError):
    """A table would exceed the configured size cap."""


class ConfigError(EnvelopesError):
    """Configuration file or run settings are malformed."""
