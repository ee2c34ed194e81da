"""Mean-field particle systems with an evolving interaction field."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

EXPERIMENTS = ("rates", "contract", "chaos", "concentrate", "couple", "moments", "cltbound")
