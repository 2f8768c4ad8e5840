"""Exception hierarchy shared by the compiler and the runtime."""

from __future__ import annotations


class TircError(Exception):
    """Base class for every error raised by this package."""


# -- compiler -----------------------------------------------------------------


class IncompatibleShapes(TircError):
    pass


class InconsistentShapes(TircError):
    pass


class NotSupported(TircError):
    pass


class InvalidTileSpec(TircError):
    pass


class IRSyntaxError(TircError):
    """Raised by the textual parser; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"{line}:{column}: {message}")


class VerificationFailed(TircError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else "unknown"
        super().__init__(f"verification failed: {first}")


class MalformedBytecode(TircError):
    pass


# -- module container ---------------------------------------------------------


class ModuleFormatError(TircError):
    pass


class BadMagic(ModuleFormatError):
    pass


class UnsupportedVersion(ModuleFormatError):
    pass


class CorruptSectionTable(ModuleFormatError):
    pass


class TruncatedPayload(ModuleFormatError):
    pass


class MalformedSection(ModuleFormatError):
    pass


# -- runtime ------------------------------------------------------------------


class RuntimeFault(TircError):
    pass


class PermissionDenied(RuntimeFault):
    pass


class OutOfMemory(RuntimeFault):
    pass


class KernelTrap(RuntimeFault):
    pass


class DoubleRelease(RuntimeFault):
    pass


class CycleDetected(RuntimeFault):
    pass


class MissingKernel(RuntimeFault):
    pass


class SignatureMismatch(RuntimeFault):
    pass


class ShapeMismatch(TircError):
    pass
