class WaveMaslovError(Exception):
    """Base class for every error raised by the package."""

    code = "error"

    def __init__(self, message: str, **info):
        super().__init__(message)
        self.info = info


class InvalidParameters(WaveMaslovError, ValueError):
    code = "invalid_parameters"


class TuringViolated(WaveMaslovError):
    code = "turing_violated"


class NonConvergence(WaveMaslovError):
    code = "non_convergence"


class TailTooFat(WaveMaslovError):
    code = "tail_too_fat"


class ImaginaryEigenvalue(WaveMaslovError):
    code = "imaginary_eigenvalue"


class DegenerateSplitting(WaveMaslovError):
    code = "degenerate_splitting"


class RankAmbiguity(WaveMaslovError):
    code = "rank_ambiguity"


class DefectBlowup(WaveMaslovError):
    code = "defect_blowup"


class NoValidTau(WaveMaslovError):
    code = "no_valid_tau"


class ShelfNotFound(WaveMaslovError):
    code = "shelf_not_found"


class ShelfViolated(WaveMaslovError):
    code = "shelf_violated"


class IrregularCrossing(WaveMaslovError):
    code = "irregular_crossing"


class ClusteredRoots(WaveMaslovError):
    code = "clustered_roots"


class SpreadTooLarge(WaveMaslovError):
    code = "spread_too_large"


class BoundaryRoot(WaveMaslovError):
    code = "boundary_root"


class NonConvergentRefinement(WaveMaslovError):
    code = "nonconvergent_refinement"


class GridTooCoarse(WaveMaslovError):
    code = "grid_too_coarse"


class SolverFailure(WaveMaslovError):
    code = "solver_failure"


class NoiseFloor(WaveMaslovError):
    code = "noise_floor"
