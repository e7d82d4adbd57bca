"""
Exception hierarchy for voxphys.

Every error carries the exit code the CLI reports for it:
2 for malformed input, 3 for semantic failures.
"""


class VoxPhysError(Exception):
    exit_code = 3

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail


# ---------- malformed input (exit 2) ----------
class MalformedInput(VoxPhysError):
    exit_code = 2


class InvalidGrid(MalformedInput):
    pass


class FrameMismatch(MalformedInput):
    pass


# ---------- semantic errors (exit 3) ----------
class ZeroMass(VoxPhysError):
    pass


class EmptyObject(VoxPhysError):
    pass


class UnknownObject(VoxPhysError):
    pass


class NoBackground(VoxPhysError):
    pass


class Unreachable(VoxPhysError):
    pass


class NoAnchors(VoxPhysError):
    pass


class EmptyShape(VoxPhysError):
    pass


class EmptyMesh(VoxPhysError):
    pass


class EmptySet(VoxPhysError):
    pass
