class BackendError(Exception):
    def __init__(self, message: str):
        self.message = message

class IVectorFormatError(BackendError):
    def __init__(self, message: str):
        self.message = message

class TruncatedPayloadError(IVectorFormatError):
    def __init__(self, message: str):
        self.message = message

class TrialParseError(BackendError):
    def __init__(self, message: str, line_number: int):
        self.message = f"line {line_number}: {message}"
        self.line_number = line_number

class EnrolMapError(BackendError):
    def __init__(self, message: str, line_number: int):
        self.message = f"line {line_number}: {message}"
        self.line_number = line_number

class DimensionMismatchError(BackendError):
    def __init__(self, message: str):
        self.message = message

class InvalidInputError(BackendError):
    def __init__(self, message: str):
        self.message = message

class InsufficientDataError(BackendError):
    def __init__(self, message: str):
        self.message = message

class DecompositionError(BackendError):
    def __init__(self, message: str):
        self.message = message

class UnknownIdError(BackendError):
    def __init__(self, message: str):
        self.message = message

class CohortError(BackendError):
    def __init__(self, message: str):
        self.message = message

class LabelError(BackendError):
    def __init__(self, message: str):
        self.message = message
