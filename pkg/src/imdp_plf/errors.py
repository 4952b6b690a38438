"""Exception hierarchy.

Validation problems derive from :class:`ModelError` (CLI exit code 1);
synthesis failures from :class:`SynthesisError`.
"""


class ImdpPlfError(Exception):
    pass


class ModelError(ImdpPlfError, ValueError):
    pass


class ParseError(ModelError):
    pass


class IntervalOrder(ModelError):
    def __init__(self, what, index, lower, upper):
        self.what = what
        self.index = index
        super().__init__(f"IntervalOrder: {what}{index}: lower {lower!r} > upper {upper!r}")


class RowSumInfeasible(ModelError):
    def __init__(self, state, action, lo_sum, hi_sum):
        self.state = state
        self.action = action
        super().__init__(
            f"RowSumInfeasible: ({state}, {action}) lower sum {lo_sum:.12g}, "
            f"upper sum {hi_sum:.12g}; no distribution fits the intervals"
        )


class DiscountRange(ModelError):
    def __init__(self, index, value):
        super().__init__(f"DiscountRange: discount[{index}] = {value!r} not in (0, 1)")


class PolicyExplosion(ModelError):
    def __init__(self, count, cap):
        self.count = count
        super().__init__(f"PolicyExplosion: {count} stationary policies exceed cap {cap}")


class ProjectionFailed(ModelError):
    pass


class NotSimplex(ValueError, ImdpPlfError):
    pass


class SingularSystem(ImdpPlfError):
    pass


class DimensionMismatch(ValueError, ImdpPlfError):
    pass


class VertexExplosion(ImdpPlfError):
    def __init__(self, count, cap):
        self.count = count
        super().__init__(
            f"VertexExplosion: {count} corners exceed cap {cap}; "
            "use budgeted vertex mode (--vertex-mode budgeted)"
        )


class BadUserVertex(ValueError, ImdpPlfError):
    pass


class EmptyVertexSet(ValueError, ImdpPlfError):
    pass


class SynthesisError(ImdpPlfError):
    pass


class SolverTimeout(SynthesisError):
    pass


class Infeasible(SynthesisError):
    pass


class DidNotEnterIsoa(ImdpPlfError):
    pass
