from .asmm import *  # noqa: F401
from .sr import *  # noqa: F401
