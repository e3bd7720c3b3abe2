"""Exception types shared across the package."""


class CloudPeerError(Exception):
    pass


class InvalidArgument(CloudPeerError, ValueError):
    pass


class ConfigError(CloudPeerError, ValueError):
    pass


class SchemaViolation(CloudPeerError, ValueError):
    pass


class DuplicateId(CloudPeerError):
    pass


class JoinFailure(CloudPeerError):
    pass


class RoutingError(CloudPeerError):
    """Route requested from a node that is not live."""


class RoutingFailure(CloudPeerError):
    """No live path towards the key could be found."""


class DuplicateQuery(CloudPeerError):
    pass


class ProtocolViolation(CloudPeerError):
    """A management service received more work than it was granted."""
