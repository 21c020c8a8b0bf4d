"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for I/O and parameter problems, 3 for dimension mismatches, 4 for
missing labels and 5 for numerical failures.
"""

import numpy as np


class SPCMHError(Exception):
    exit_code = 1


class ParameterError(SPCMHError, ValueError):
    exit_code = 2


class DimensionError(SPCMHError, ValueError):
    exit_code = 3


class AsymmetryError(DimensionError):
    pass


class DegenerateSampleError(ParameterError):
    def __init__(self, column, modality=None):
        self.column = column
        self.modality = modality
        where = f" of modality {modality}" if modality else ""
        super().__init__(f"column {column}{where} has zero norm and cannot be normalized")


class FormatError(SPCMHError, ValueError):
    """Malformed input file. ``line`` or ``offset`` locate the problem when known."""

    exit_code = 2

    def __init__(self, message, path=None, line=None, offset=None):
        self.path = path
        self.line = line
        self.offset = offset
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte offset {offset}")
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)


class MissingLabelsError(SPCMHError):
    exit_code = 4


class EmptyResultError(SPCMHError, ValueError):
    exit_code = 2


class UndefinedCurveError(SPCMHError, ValueError):
    exit_code = 5


class NumericalError(SPCMHError, np.linalg.LinAlgError):
    exit_code = 5


class SingularityError(NumericalError):
    pass


class NonUniqueSolutionError(NumericalError):
    """Raised when ``p_i + q_j`` vanishes for some eigenvalue pair."""

    def __init__(self, i, j, p, q):
        self.i, self.j, self.p, self.q = i, j, p, q
        super().__init__(
            f"Sylvester equation has no unique solution: eigenvalue pair "
            f"(i={i}, j={j}) gives p_i + q_j = {p + q:.3e} (p_i={p:.6g}, q_j={q:.6g})"
        )


class ConfigurationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
