from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TypeAlias
import numpy as np
from numpy.typing import NDArray
from src.errors import DomainError, SingularityError

Time: TypeAlias = float | NDArray[np.float64]

DEFAULT_GAMMA_MAX = 0.125


def _check_closed(t: Time) -> NDArray[np.float64]:
    arr = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"time must lie in [0, 1], got {t!r}")
    return arr


def _check_open(t: Time) -> NDArray[np.float64]:
    arr = _check_closed(t)
    if np.any(arr == 0.0) or np.any(arr == 1.0):
        raise SingularityError(f"derivatives are singular at the endpoints, got t={t!r}")
    return arr


def _out(arr: NDArray[np.float64], t: Time) -> Time:
    return float(arr) if np.ndim(t) == 0 else arr


@dataclass(frozen=True)
class BridgeSchedule(ABC):
    """브리지 계수 (α_t, β_t, γ_t) 와 그 도함수를 제공하는 스케줄.

    샘플러가 필요로 하는 시간 의존 스칼라는 모두 이 객체에서 나옵니다.
    생성 이후에는 변경되지 않으므로 여러 작업에서 공유해도 안전합니다.
    """

    gamma_max: float = DEFAULT_GAMMA_MAX

    form: str = "abstract"

    def __post_init__(self):
        if not np.isfinite(self.gamma_max) or self.gamma_max <= 0:
            raise DomainError(f"gamma_max must be positive, got {self.gamma_max}")

    @abstractmethod
    def _alpha(self, t: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _beta(self, t: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _gamma_sq(self, t: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _rates(
        self, t: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """α̇, β̇. 닫힌 구간 [0, 1] 에서 유한해야 합니다."""

    @abstractmethod
    def _gamma_dot(self, t: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _epsilon_unit(self, t: NDArray[np.float64]) -> NDArray[np.float64]:
        """η = 1 일 때의 ε_t. α̇/α 를 직접 나누지 않는 정리된 식이어야 합니다."""

    def coefficients(self, t: Time) -> tuple[Time, Time, Time]:
        arr = _check_closed(t)
        return (
            _out(self._alpha(arr), t),
            _out(self._beta(arr), t),
            _out(self._gamma_sq(arr), t),
        )

    def rates(self, t: Time) -> tuple[Time, Time]:
        """α̇_t, β̇_t. γ̇ 와 달리 끝점에서도 정의됩니다."""
        arr = _check_closed(t)
        alpha_dot, beta_dot = self._rates(arr)
        return _out(alpha_dot, t), _out(beta_dot, t)

    def gamma(self, t: Time) -> Time:
        arr = _check_closed(t)
        return _out(np.sqrt(np.maximum(self._gamma_sq(arr), 0.0)), t)

    def derivatives(self, t: Time) -> tuple[Time, Time, Time]:
        arr = _check_open(t)
        alpha_dot, beta_dot = self._rates(arr)
        gamma_dot = self._gamma_dot(arr)
        return _out(alpha_dot, t), _out(beta_dot, t), _out(gamma_dot, t)

    def epsilon(self, t: Time, eta: float) -> Time:
        """추론 시 주입되는 노이즈 세기 ε_t = η(γγ̇ - (α̇/α)γ²).

        t = 1 에서도 샘플러의 첫 스텝이 이 값을 사용하므로 닫힌 구간 [0, 1] 전체에서
        정의됩니다. 정리된 식은 끝점에서도 유한합니다.
        """
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {eta}")
        arr = _check_closed(t)
        return _out(eta * self._epsilon_unit(arr), t)


@dataclass(frozen=True)
class LinearSchedule(BridgeSchedule):
    """α_t = 1 - t, β_t = t, γ_t² = 4γ_max² t(1 - t)."""

    form: str = "linear"

    def _alpha(self, t):
        return 1.0 - t

    def _beta(self, t):
        return t.copy()

    def _gamma_sq(self, t):
        return 4.0 * self.gamma_max**2 * t * (1.0 - t)

    def _rates(self, t):
        return np.full_like(t, -1.0), np.ones_like(t)

    def _gamma_dot(self, t):
        return self.gamma_max * (1.0 - 2.0 * t) / np.sqrt(t * (1.0 - t))

    def _epsilon_unit(self, t):
        # γγ̇ - (α̇/α)γ² = 2γ_max²(1 - 2t) + 4γ_max² t
        return np.full_like(t, 2.0 * self.gamma_max**2)


SCHEDULE_FORMS: dict[str, type[BridgeSchedule]] = {
    "linear": LinearSchedule,
}


def make_schedule(form: str = "linear", gamma_max: float = DEFAULT_GAMMA_MAX) -> BridgeSchedule:
    try:
        cls = SCHEDULE_FORMS[form]
    except KeyError:
        raise DomainError(
            f"unknown schedule form {form!r}, expected one of {sorted(SCHEDULE_FORMS)}"
        ) from None
    return cls(gamma_max=gamma_max)


@dataclass(frozen=True)
class ValidationReport:
    grid_points: int
    boundary_violation: float
    min_gamma_sq: float
    min_norm: float

    @property
    def max_violation(self) -> float:
        return max(self.boundary_violation, max(0.0, -self.min_gamma_sq))

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-12 and self.min_norm > 0.0


def validate_boundaries(sched: BridgeSchedule, grid_points: int = 1001) -> ValidationReport:
    """경계 조건과 α² + β² + γ² > 0 을 균등 격자 위에서 확인합니다.

    위반은 예외 대신 리포트에 기록됩니다.
    """
    if grid_points < 2:
        raise DomainError(f"grid_points must be at least 2, got {grid_points}")

    t = np.linspace(0.0, 1.0, grid_points)
    alpha, beta, gamma_sq = sched.coefficients(t)
    gamma_sq = np.asarray(gamma_sq)

    boundary = np.abs(
        np.array(
            [
                alpha[0] - 1.0,
                beta[0],
                np.sqrt(max(gamma_sq[0], 0.0)),
                alpha[-1],
                beta[-1] - 1.0,
                np.sqrt(max(gamma_sq[-1], 0.0)),
            ]
        )
    )
    norm = np.asarray(alpha) ** 2 + np.asarray(beta) ** 2 + gamma_sq

    return ValidationReport(
        grid_points=grid_points,
        boundary_violation=float(boundary.max()),
        min_gamma_sq=float(gamma_sq.min()),
        min_norm=float(norm.min()),
    )
