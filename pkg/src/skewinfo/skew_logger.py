import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
PACKAGE_LOGGER = "skewinfo"


def get_logger(name: str) -> logging.Logger:
    """Return a module logger; the package logger gets one console handler."""
    package = logging.getLogger(PACKAGE_LOGGER)
    if not package.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        package.addHandler(handler)
        package.propagate = False
        if package.level == logging.NOTSET:
            package.setLevel(logging.WARNING)
    return logging.getLogger(name)


class RunLoggerError(Exception):
    """Custom exception for RunLogger errors."""


class RunLogger:
    """
    Run log for skewinfo command-line sessions.

    This class records information assemblies, rank diagnoses, singularity
    predictions, fits and experiments to a dated log file and optionally to
    the console. The level also applies to the library loggers under the
    ``skewinfo`` namespace.
    """

    def __init__(self, log_directory: Optional[str] = None, console_output: bool = True, log_level: str = "INFO"):
        """
        Initialize the RunLogger.

        Args:
            log_directory (Optional[str]): Directory for log files; no file handler when None.
            console_output (bool): Whether to echo records to the console.
            log_level (str): Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL).

        Raises:
            RunLoggerError: If logger initialization fails.
        """
        self.log_directory = log_directory
        self.console_output = console_output
        self.log_level = self._get_log_level(log_level)

        try:
            self._setup_logger()
        except Exception as e:
            raise RunLoggerError(f"Failed to initialize logger: {str(e)}") from e

    def _setup_logger(self):
        """Set up the logger with file and console handlers."""
        self.logger = logging.getLogger("skewinfo.run")
        self.logger.setLevel(self.log_level)
        self.logger.propagate = False
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()

        formatter = logging.Formatter(LOG_FORMAT)
        if self.log_directory:
            os.makedirs(self.log_directory, exist_ok=True)
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(self.log_level)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)

        if self.console_output:
            console_handler = logging.StreamHandler()
            console_handler.setLevel(self.log_level)
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)

        get_logger(PACKAGE_LOGGER).setLevel(self.log_level)

    @property
    def log_file(self) -> Optional[str]:
        if not self.log_directory:
            return None
        return os.path.join(self.log_directory, f"skewinfo_log_{datetime.now().strftime('%Y%m%d')}.log")

    def _get_log_level(self, level: str) -> int:
        """Convert string log level to logging module constant."""
        levels = {
            "DEBUG": logging.DEBUG,
            "INFO": logging.INFO,
            "WARNING": logging.WARNING,
            "ERROR": logging.ERROR,
            "CRITICAL": logging.CRITICAL
        }
        return levels.get(level.upper(), logging.INFO)

    def log_information(self, model_tag: str, which: str, max_error: float):
        """Log a Fisher information assembly."""
        self.logger.info(f"Assembled {which} information for {model_tag} (max entry error {max_error:.3e})")

    def log_rank(self, model_tag: str, rank: int, nullity: int, indeterminate: bool):
        """Log a rank diagnosis."""
        self.logger.info(f"Rank diagnosis for {model_tag}: rank={rank}, nullity={nullity}")
        if indeterminate:
            self.logger.warning(f"Rank of {model_tag} is indeterminate: a singular value sits near the tolerance")

    def log_prediction(self, model_tag: str, verdict: str, details: Optional[Dict[str, Any]] = None):
        """Log a singularity prediction."""
        self.logger.info(f"Prediction for {model_tag}: {verdict}")
        if details:
            self.logger.debug(f"Prediction details: {details}")

    def log_verification(self, model_tag: str, passed: bool, messages: Optional[List[str]] = None):
        """Log a verification outcome."""
        status = "passed" if passed else "failed"
        self.logger.info(f"Verification {status} for {model_tag}")
        for message in messages or []:
            self.logger.warning(f"Verification note: {message}")

    def log_fit(self, model_tag: str, loglik: float, converged: bool):
        """Log a maximum-likelihood fit."""
        self.logger.info(f"Fitted {model_tag}: loglik={loglik:.6f}, converged={converged}")

    def log_experiment(self, model_tag: str, summary: Dict[str, Any]):
        """Log a replicate experiment summary."""
        self.logger.info(f"Experiment on {model_tag}: {summary}")

    def log_error(self, operation: str, error_message: str):
        """Log operation errors."""
        self.logger.error(f"Error during {operation}: {error_message}")

    def log_custom(self, level: str, message: str):
        """Log custom messages at specified level."""
        log_func = getattr(self.logger, level.lower(), self.logger.info)
        log_func(message)

    def get_latest_logs(self, count: int = 10) -> List[str]:
        """
        Retrieve the latest log entries.

        Args:
            count (int): Number of log entries to retrieve.

        Returns:
            List[str]: List of the latest log entries.
        """
        if not self.log_file or not os.path.exists(self.log_file):
            return []

        with open(self.log_file, 'r') as f:
            lines = f.readlines()
            return lines[-count:]

    def __repr__(self) -> str:
        """Provide a string representation of the RunLogger."""
        return (f"RunLogger(log_directory='{self.log_directory}', console_output={self.console_output}, "
                f"log_level='{logging.getLevelName(self.log_level)}')")
