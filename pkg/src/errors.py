class BridgeError(Exception):
    """패키지 전체에서 사용하는 기본 예외입니다."""

    exit_code: int = 1


class DomainError(BridgeError, ValueError):
    """연산이 정의되지 않는 인자(예: [0, 1] 밖의 시간)가 들어왔을 때."""


class SingularityError(BridgeError, ZeroDivisionError):
    """γ_t = 0 또는 √(t(1-t)) = 0 으로 나누게 될 때."""

    exit_code = 3


class ShapeMismatchError(BridgeError, ValueError):
    pass


class DegenerateInputError(BridgeError, ValueError):
    """분산이 0이거나 표본이 모두 같은 등, 통계량이 정의되지 않을 때."""

    exit_code = 2


class NumericalError(BridgeError, ArithmeticError):
    """학습/샘플링 중 non-finite 값이 발생했을 때."""

    exit_code = 3

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ConfigError(BridgeError, ValueError):
    exit_code = 1


class UsageError(BridgeError):
    """명령행 인자가 잘못되었을 때."""

    exit_code = 1


class DataError(BridgeError):
    exit_code = 2


class ModelMismatchError(DataError):
    pass


class VolumeFormatError(DataError, ValueError):
    pass


class BadMagicError(VolumeFormatError):
    pass


class TruncatedPayloadError(VolumeFormatError):
    pass


class PayloadSizeError(VolumeFormatError):
    pass


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, BridgeError):
        return error.exit_code
    if isinstance(error, OSError):
        return 2
    return 1
