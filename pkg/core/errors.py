"""Error hierarchy for the null hypersurface toolkit.

Every error is a ``ValueError`` so callers that only guard against bad input
keep working. ``exit_code`` is what the command line returns when the error
aborts a run.
"""


class NullGeometryError(ValueError):
    """Base class for all toolkit errors"""

    exit_code = 2

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        """Structured form used by error reports"""
        return {
            'error': type(self).__name__,
            'message': str(self),
            'context': {k: _plain(v) for k, v in sorted(self.context.items())},
        }


def _plain(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


# Linear algebra / jets
class DimensionMismatch(NullGeometryError):
    pass


class NonSPD(NullGeometryError):
    pass


class NoConvergence(NullGeometryError):
    pass


class AsymmetricMatrix(NullGeometryError):
    pass


class JetFailure(NullGeometryError):
    pass


# Null direction
class NotNull(NullGeometryError):
    """Induced metric does not have a one-dimensional radical"""


class NotDegenerate(NotNull):
    pass


class RankDeficient(NotNull):
    pass


# Ambient charts
class OutOfDomain(NullGeometryError):
    pass


class SingularMetric(NullGeometryError):
    pass


class InvalidWarping(NullGeometryError):
    pass


class UncertifiedCurvature(NullGeometryError):
    pass


# Frames
class DegenerateScreen(NullGeometryError):
    pass


class NotAGraph(NullGeometryError):
    pass


class SingularLocus(NullGeometryError):
    pass


class FrameInconsistent(NullGeometryError):
    """Frame invariants fail at a point, so no identity there can be trusted"""


# Catalog
class BadParams(NullGeometryError):
    pass


class EikonalViolated(NullGeometryError):
    pass


# Checker preconditions
class NotIsoparametric(NullGeometryError):
    pass


class NotEinstein(NullGeometryError):
    pass


class ScenarioAborted(NullGeometryError):
    """A grid point failed; carries the first failure"""

    def __init__(self, message, first_error=None, **context):
        super().__init__(message, **context)
        self.first_error = first_error
        if first_error is not None:
            self.exit_code = getattr(first_error, 'exit_code', 2)

    def to_dict(self):
        payload = super().to_dict()
        if isinstance(self.first_error, NullGeometryError):
            payload['cause'] = self.first_error.to_dict()
        elif self.first_error is not None:
            payload['cause'] = {'error': type(self.first_error).__name__,
                                'message': str(self.first_error), 'context': {}}
        return payload


class ConfigError(NullGeometryError):
    """Scenario file or command-line configuration is invalid"""

    exit_code = 3
