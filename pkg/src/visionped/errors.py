"""Exception hierarchy. Every error carries a distinct CLI exit code."""


class VisionPedError(Exception):
    exit_code = 1


class ConfigError(VisionPedError, ValueError):
    exit_code = 2


class ZeroRelativeVelocity(VisionPedError, ValueError):
    exit_code = 3


class CoincidentPositions(VisionPedError, ValueError):
    exit_code = 4


class AtGoal(VisionPedError, ValueError):
    exit_code = 5


class LambdaZero(VisionPedError, ValueError):
    exit_code = 6


class DegenerateStencil(VisionPedError, ArithmeticError):
    exit_code = 7


class UnstableStep(VisionPedError, RuntimeError):
    exit_code = 8


class NoPath(VisionPedError, RuntimeError):
    exit_code = 9


class Overfull(VisionPedError, ValueError):
    exit_code = 10


class MismatchedConfigs(VisionPedError, ValueError):
    exit_code = 11
