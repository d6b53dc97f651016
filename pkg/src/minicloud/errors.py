"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, simulated
cloud or cluster refusals exit 3, deployment-directory and lock problems
exit 4.
"""


class MiniCloudError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MiniCloudError, ValueError):
    """A document, flag, or argument violates a stated invariant."""


class DnsError(ValidationError):
    """A hostname is malformed or falls outside the configured zone."""


class CloudError(MiniCloudError, RuntimeError):
    """The simulated provider refused or cannot complete an operation."""


class QuotaError(CloudError):
    """Allocating the resource would exceed a provider quota."""


class OrchestratorError(CloudError):
    """The cluster cannot satisfy a scheduling, install, or query request."""


class StateError(MiniCloudError, RuntimeError):
    """A deployment directory, lock, or lifecycle precondition is violated."""


class RouteNotFound(MiniCloudError):
    """No routing rule matches the requested host (404-equivalent)."""

    status = 404


class NoHealthyBackend(MiniCloudError):
    """The matched service has no running endpoints (503-equivalent)."""

    status = 503
