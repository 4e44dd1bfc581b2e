from __future__ import annotations

from typing import Any, Dict, Optional


# ==========================
# 終了コード（CLI契約）
# ==========================
EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class CsfError(Exception):
    """全エラーの基底。exit_code と detail を持つ"""

    exit_code: int = EXIT_ACCEPTANCE

    def __init__(self, detail: str, *, exit_code: Optional[int] = None, **context: Any) -> None:
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        if not self.context:
            return self.detail
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
        return f"{self.detail} ({extra})"


class _ConfigError(CsfError):
    exit_code = EXIT_CONFIG


class _NumericalError(CsfError):
    exit_code = EXIT_NUMERICAL


# ==========================
# geometry / fields
# ==========================
class DegenerateRadius(CsfError):
    pass


class StencilOutOfDomain(CsfError):
    pass


class RegionViolation(CsfError):
    pass


class GridMismatch(CsfError):
    pass


class MissingTimeLevel(CsfError):
    pass


class SingularSet(CsfError):
    pass


class DomainError(_ConfigError):
    pass


# ==========================
# charge / energy / analysis
# ==========================
class SolverNonConvergence(_NumericalError):
    pass


class WeightOutOfRange(_ConfigError):
    pass


class ExponentOutOfRange(_ConfigError):
    pass


class WindowNotCovered(CsfError):
    pass


class InsufficientDecade(CsfError):
    pass


class NonPositiveSamples(CsfError):
    pass


class NoChargedData(CsfError):
    pass


class FieldNotConformalKilling(CsfError):
    pass


# ==========================
# evolve / cli
# ==========================
class RecipeUnknown(_ConfigError):
    pass


class CFLViolation(_ConfigError):
    pass


class NaNDetected(_NumericalError):
    pass


class ConfigParse(_ConfigError):
    pass


class SuiteFailure(CsfError):
    pass


class AcceptanceFailure(CsfError):
    pass


class StageFailure(CsfError):
    """ステージ名付きで原因をラップする。exit_code は原因のものを引き継ぐ"""

    def __init__(self, stage: str, cause: BaseException) -> None:
        code = getattr(cause, "exit_code", EXIT_ACCEPTANCE)
        super().__init__(f"stage '{stage}' failed: {cause}", exit_code=code, stage=stage)
        self.stage = stage
        self.cause = cause
