"""Exception hierarchy for wavesrc."""


class WavesrcError(Exception):
    """Base class for all library errors."""


class ValidationError(WavesrcError):
    """An input object violates one of its invariants."""


class OffSphere(ValidationError):
    pass


class Coplanar(ValidationError):
    pass


class SingularGeometry(ValidationError):
    pass


class OrbitError(ValidationError):
    pass


class ConfigError(WavesrcError):
    pass


class EmptySeries(WavesrcError):
    pass


class NonPositiveS(WavesrcError):
    pass


class OrderTooSmall(WavesrcError):
    pass


class BadSpacing(WavesrcError):
    pass


class NoArrival(WavesrcError):
    """The query time precedes the first wavefront at the receiver."""


class StepTooCoarse(WavesrcError):
    pass


class SingularNode(WavesrcError):
    """An evaluation point sits on top of a quadrature node."""


class SupportTooLarge(WavesrcError):
    pass


class TooShort(WavesrcError):
    pass


class OutOfBand(WavesrcError):
    pass


class BandEscape(WavesrcError):
    pass


class DataGap(WavesrcError):
    pass


class DirectionNotUnit(WavesrcError):
    pass


class EmptySpectrum(WavesrcError):
    pass


class BadFrequencyPair(WavesrcError):
    pass


class SmallHWeight(WavesrcError):
    pass
