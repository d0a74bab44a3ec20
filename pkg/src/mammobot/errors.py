"""Exception hierarchy shared by the solvers and the simulator."""


class MammobotError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class LengthMismatch(MammobotError, ValueError):
    code = "length_mismatch"


class TooFewPoses(MammobotError, ValueError):
    code = "too_few_poses"


class DegenerateMotion(MammobotError, ValueError):
    code = "degenerate_motion"


class TooFewSamples(MammobotError, ValueError):
    code = "too_few_samples"


class Diverged(MammobotError, ArithmeticError):
    code = "diverged"


class RankDeficient(MammobotError, ValueError):
    code = "rank_deficient"


class DegenerateMarkers(MammobotError, ValueError):
    code = "degenerate_markers"


class DegenerateConfiguration(MammobotError, ValueError):
    code = "degenerate_configuration"


class RankAmbiguity(MammobotError, ValueError):
    code = "rank_ambiguity"


class PointAtInfinity(MammobotError, ValueError):
    code = "point_at_infinity"


class NotConverged(MammobotError, RuntimeError):
    code = "not_converged"


class JointLimit(MammobotError, ValueError):
    code = "joint_limit"


class PlanningTimeout(MammobotError, RuntimeError):
    code = "planning_timeout"


class ContactTimeout(MammobotError, RuntimeError):
    code = "contact_timeout"


class AllZeroFrame(MammobotError, ValueError):
    code = "all_zero_frame"


class ShapeMismatch(MammobotError, ValueError):
    code = "shape_mismatch"


class ZeroBackgroundVariance(MammobotError, ValueError):
    code = "zero_background_variance"


class MarkerBehindCamera(MammobotError, ValueError):
    code = "marker_behind_camera"


class RasterError(MammobotError, ValueError):
    code = "bad_raster"
