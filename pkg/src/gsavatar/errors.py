"""Shared exception types.

Invalid arguments raise plain ValueError everywhere; malformed or corrupt
serialized data raises DecodeError so callers (and the CLI exit-code mapping)
can tell the two apart.
"""


class DecodeError(Exception):
    """A bitstream, file, or section could not be decoded."""
