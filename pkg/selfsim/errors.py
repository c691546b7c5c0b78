class SelfSimError(Exception):
    code = 'error'

    def __init__(self, message, code=None):
        self.message = message
        if code is not None:
            self.code = code

    def __str__(self):
        return f'{self.code}: {self.message}'


class DomainError(SelfSimError, ValueError):
    code = 'domain'


class QuadratureError(SelfSimError):
    code = 'quadrature'

    def __init__(self, message, estimate=None, error=None, cells=None, partial_sums=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.cells = cells
        self.partial_sums = list(partial_sums) if partial_sums is not None else []

    def __str__(self):
        text = f'{self.code}: {self.message} (estimate={self.estimate!r}, error={self.error!r}'
        if self.cells is not None:
            text += f', cells={self.cells}'
        if self.partial_sums:
            text += f', last partial sums={self.partial_sums!r}'
        return text + ')'


class ExtrapolationError(SelfSimError):
    code = 'extrapolation'

    def __init__(self, message, sequence=None):
        super().__init__(message)
        self.sequence = list(sequence) if sequence is not None else []

    def __str__(self):
        return f'{self.code}: {self.message} (sampled sequence={self.sequence!r})'


class EvaluationError(SelfSimError):
    code = 'evaluation'

    def __init__(self, message, context=None, cause=None):
        super().__init__(message)
        self.context = dict(context) if context is not None else {}
        self.cause = cause

    def __str__(self):
        where = ', '.join(f'{k}={v!r}' for k, v in self.context.items())
        text = f'{self.code}: {self.message} at {where}'
        if self.cause is not None:
            text += f' [{self.cause}]'
        return text


class ArtifactError(SelfSimError):
    code = 'artifact'


class StalePlanError(ArtifactError):
    code = 'stale-plan'
