import logging
import os
from typing import Union

import tensorflow as tf

LOG_LEVEL_ENV = "CASCADE_VOLCOMP_LOG"


def setup_logging(logging_level=logging.INFO):
    """
    Creates a logger that logs to stderr. Sets this logger as the global default.
    Logging format is
        20-Dec-05 21:44:09: Message.

    Returns:
        Doesn't return anything. Modifies global logger.
    """
    logging.basicConfig(level=logging_level)
    fmt = logging.Formatter("%(asctime)s: %(message)s", datefmt="%y-%b-%d %H:%M:%S")
    logger = logging.getLogger()
    logger.setLevel(logging_level)
    # We want to change the format of the root logger, which is the first one
    # in the logger.handlers list. A bit hacky, but there we go.
    root = logger.handlers[0]
    root.setFormatter(fmt)


def log_level_from_env(default: Union[int, str] = logging.INFO) -> int:
    """
    Reads the logging level from the environment variable ``CASCADE_VOLCOMP_LOG``. The
    value can be a level name (``DEBUG``, ``warning``) or a number.
    """
    value = os.environ.get(LOG_LEVEL_ENV, "")
    if not value:
        value = default
    if isinstance(value, int) or str(value).isdigit():
        return int(value)
    level = logging.getLevelName(str(value).upper())
    if not isinstance(level, int):
        logging.warning(f"Unknown log level {value!r} in {LOG_LEVEL_ENV}, using INFO.")
        return logging.INFO
    return level


def set_determinism(seed: int, threads: int = 1):
    """
    Seeds Python, numpy and TF, makes TF ops deterministic and caps the number of
    threads TF uses. Thread settings can only be changed before TF initializes its
    runtime; later calls keep the current setting and log a warning.
    """
    tf.keras.utils.set_random_seed(seed)
    try:
        tf.config.experimental.enable_op_determinism()
    except AttributeError:
        logging.warning("This TF version does not support op determinism.")
    try:
        tf.config.threading.set_intra_op_parallelism_threads(threads)
        tf.config.threading.set_inter_op_parallelism_threads(threads)
    except RuntimeError:
        logging.warning(
            f"Could not set TF thread count to {threads}, runtime already initialized."
        )
