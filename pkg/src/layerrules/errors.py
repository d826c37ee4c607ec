"""Exception types raised across the package."""


class LayerRulesError(Exception):
    """Base class for every error raised by layerrules."""


# data / file formats
class UnsupportedFormat(LayerRulesError, ValueError):
    pass


class TruncatedFile(LayerRulesError, ValueError):
    pass


class IoFailure(LayerRulesError, OSError):
    pass


class SchemaViolation(LayerRulesError, ValueError):
    pass


# network
class ShapeMismatch(LayerRulesError, ValueError):
    pass


class UnknownActivation(LayerRulesError, ValueError):
    pass


class DuplicateLayerName(LayerRulesError, ValueError):
    pass


class DimensionMismatch(LayerRulesError, ValueError):
    pass


class NonFiniteInput(LayerRulesError, ValueError):
    pass


class UnknownLayer(LayerRulesError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# extraction / rules
class MissingLabels(LayerRulesError, ValueError):
    pass


class SentinelCollision(LayerRulesError, ValueError):
    pass


class EmptyDataset(LayerRulesError, ValueError):
    pass


class NoRulesForLabel(LayerRulesError, LookupError):
    pass


# prover
class EmptySupport(LayerRulesError, ValueError):
    pass


class InconsistentBox(LayerRulesError, ValueError):
    pass


class AnchorViolatesProperty(LayerRulesError, ValueError):
    pass


class RuleUnsatisfiedAtInput(LayerRulesError, ValueError):
    pass


class UnknownOperator(LayerRulesError, ValueError):
    pass


# monitor
class LayerMismatch(LayerRulesError, ValueError):
    pass
