class AuctionLabError(Exception):
    """Base exception for auctionlab errors"""
    pass


class ValidationError(AuctionLabError):
    """Raised when parameters or configuration documents are invalid"""
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DataError(AuctionLabError):
    """Raised when calibration input cannot be parsed"""
    def __init__(self, message, line=None, path=None):
        super().__init__(message)
        self.line = line
        self.path = path


class InfeasibleMechanismError(AuctionLabError):
    """Raised when every candidate mechanism violates the reservation constraint"""
    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or []


class CacheError(AuctionLabError):
    """Raised when a cached policy table cannot be read"""
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class UnsortedDataWarning(UserWarning):
    """Emitted when calibration rows are not in date order"""
    pass
