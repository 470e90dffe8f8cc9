"""Exception hierarchy shared by all modules."""


class PhraseCriticError(Exception):
    pass


class InvalidArgumentError(PhraseCriticError, ValueError):
    pass


class StateError(PhraseCriticError, RuntimeError):
    pass


class NotFlippableError(PhraseCriticError):
    pass


class InsufficientDataError(PhraseCriticError):
    pass


class MissingGroundingError(PhraseCriticError, LookupError):
    def __init__(self, image_id, phrase_text):
        super().__init__(f"no grounding for phrase {phrase_text!r} in image {image_id!r}")
        self.image_id = image_id
        self.phrase_text = phrase_text


class FormatError(PhraseCriticError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ReferentialIntegrityError(PhraseCriticError):
    pass


class CheckpointIncompatibleError(PhraseCriticError):
    pass


class NumericError(PhraseCriticError, ArithmeticError):
    pass
