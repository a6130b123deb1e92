"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ShadowMiaError(Exception):
    exit_code = 1

    def __init__(self, message, stage=None):
        self.stage = None
        super().__init__(message)
        if stage:
            tag_stage(self, stage)


class ConfigError(ShadowMiaError, ValueError):
    exit_code = 1


class DataError(ShadowMiaError, ValueError):
    exit_code = 2


class TrainingError(ShadowMiaError, RuntimeError):
    exit_code = 3


class EvaluationError(ShadowMiaError, ValueError):
    exit_code = 4


def tag_stage(exc, stage):
    """Prefix ``exc``'s message with the pipeline stage it escaped from (once)."""
    if isinstance(exc, ShadowMiaError) and not exc.stage:
        exc.stage = stage
        exc.args = (f"[{stage}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
    return exc
