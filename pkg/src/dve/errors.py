"""Exception hierarchy.

Every error carries a short ``code`` that is written to the ``error`` column
of the record store when an estimator fails inside a benchmark run.
"""


class DVEError(Exception):
    code = "error"


class EmptySample(DVEError, ValueError):
    code = "empty_sample"


class InvalidSpec(DVEError, ValueError):
    code = "invalid_spec"


class DegenerateProfile(DVEError, ValueError):
    code = "degenerate_profile"


class ZeroCoverage(DegenerateProfile):
    code = "zero_coverage"


class NoConvergence(DVEError, ArithmeticError):
    code = "no_convergence"


class InvalidEstimate(DVEError, ValueError):
    code = "invalid_estimate"


class EmptyAggregate(DVEError, ValueError):
    code = "empty_aggregate"


class MissingSlice(DVEError, LookupError):
    code = "missing_slice"


class UnknownPreset(DVEError, KeyError):
    code = "unknown_preset"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigMismatch(DVEError):
    code = "config_mismatch"


class RunAborted(DVEError, OSError):
    code = "run_aborted"
