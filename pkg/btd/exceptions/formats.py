from .btd_exception import FormatError


class HeaderError(FormatError):
    detail = "Invalid volume header"
    description = "The JSON sidecar is missing, unreadable or violates the header schema."


class UnknownDtypeError(FormatError):
    detail = "Unknown dtype"
    description = "Only f32 and u8 payloads are supported."


class TruncatedPayloadError(FormatError):
    detail = "Payload size mismatch"
    description = "The payload length does not match dims x channels x dtype size."


class MalformedLineError(FormatError):
    detail = "Malformed tractogram line"
    description = "A tractogram line could not be parsed."


class DimensionMismatchError(FormatError):
    detail = "Volume dimensions do not match"
    description = "Two volumes that must share a grid have different dims or voxel sizes."


class RunFileError(FormatError):
    detail = "Invalid run file"
    description = "An experiment run file could not be read or does not match the run schema."


class FieldFileError(FormatError):
    detail = "Invalid field file"
    description = "A polynomial field file could not be parsed or holds an invalid field."
