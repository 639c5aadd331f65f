"""Gateway error type carrying the HTTP status and structured body."""


class ApiError(Exception):
    """Maps onto the wire error body: {code, message} with an HTTP status.

    400 means the request violates the wire schema, 422 means it is
    well-formed but semantically wrong, 503 means the role is not loaded.
    """

    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{status} [{code}] {message}")
        self.status = status
        self.code = code
        self.message = message


def schema_violation(message: str) -> ApiError:
    return ApiError(400, "schema_violation", message)


def semantic(code: str, message: str) -> ApiError:
    return ApiError(422, code, message)


def not_loaded(role: str) -> ApiError:
    return ApiError(503, "model_not_loaded", f"role {role} has no loaded model")
