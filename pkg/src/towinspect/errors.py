"""Shared exception hierarchy.

Every error the pipeline can raise on bad input derives from InspectError so
the CLI can map it to a machine-readable error report. Module-specific
exceptions live next to the code that raises them.
"""


class InspectError(Exception):
    """Base class for all towinspect pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__
