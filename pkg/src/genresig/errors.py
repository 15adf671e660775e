"""Exception types shared across the package.

Every failure the library raises deliberately derives from GenresigError,
so callers (and the CLI) can separate validation problems from genuine
I/O errors (plain OSError).
"""


class GenresigError(Exception):
    """Base class for all package-specific failures."""


# --- audio decoding / feature extraction ---

class MalformedHeader(GenresigError):
    """RIFF/WAVE structure is broken or required chunks are missing."""


class UnsupportedEncoding(GenresigError):
    """WAV compression code or sample layout we do not decode."""


class TruncatedFile(GenresigError):
    """A chunk or block is shorter than its header claims."""


class ClipTooShort(GenresigError):
    """Audio shorter than one analysis window."""


class WrongBinCount(GenresigError):
    """Spectrogram does not have the token geometry's bin count."""


# --- tensor engine ---

class ShapeMismatch(GenresigError):
    """Operands do not conform."""


class LabelOutOfRange(GenresigError):
    """Class index outside the logit range."""


class NotScalar(GenresigError):
    """backward() was asked to differentiate a non-scalar."""


class NonFiniteValue(GenresigError):
    """NaN/Inf produced by an op while finite checking is enabled."""


# --- training / dataset ---

class GenreTooSmall(GenresigError):
    """A genre has fewer tracks than the requested split or sample needs."""


class MissingCache(GenresigError):
    """Spectrogram cache file absent; run `prepare` first."""


class NonFiniteLoss(GenresigError):
    """Training loss diverged."""


class EmptyGenre(GenresigError):
    """No signatures available for the requested genre."""


# --- analysis ---

class TooFewVectors(GenresigError):
    """Not enough vectors (or too many components) for a PCA fit."""


class TooFewGenres(GenresigError):
    """Fewer genres than neighbors requested."""


class CorpusTooSmall(GenresigError):
    """Recommendation corpus smaller than k after excluding the query."""


# --- persistence ---

class BadMagic(GenresigError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(GenresigError):
    """File format version this build does not read."""
