import os
from datetime import datetime
from functools import wraps
from typing import Callable, Optional, Dict


class Logger:
    def __init__(self, log_file: Optional[str] = None):
        """
        Initialize the Logger. Without an explicit path the file is taken from
        RESQUE_LOG each time a line is written.
        """
        self._log_file = log_file

    @property
    def log_file(self) -> str:
        return self._log_file or os.getenv('RESQUE_LOG', 'logs/resque_log')

    @log_file.setter
    def log_file(self, path: Optional[str]):
        self._log_file = path

    def _ensure_log_directory(self):
        """Ensure the directory for the log file exists."""
        os.makedirs(os.path.dirname(os.path.abspath(self.log_file)), exist_ok=True)

    def _write_log(self, log_entry: str):
        """Write a log entry to the file."""
        try:
            self._ensure_log_directory()
            with open(self.log_file, 'a') as f:
                f.write(log_entry + '\n')
        except Exception as e:
            print(f"Error writing to log file: {e}")

    @staticmethod
    def _timestamp() -> str:
        return datetime.now().strftime('%Y-%m-%d %H:%M:%S')

    def log_event(self, event: str, **fields):
        """Write one `timestamp:event:key=value:...` line."""
        parts = [self._timestamp(), event]
        parts.extend(f"{key}={value}" for key, value in fields.items())
        self._write_log(':'.join(parts))

    def log_run(self,
                extract_fields: Optional[Dict[str, Callable]] = None,
                format_string: Optional[str] = None):
        """
        Decorator for logging solver and experiment runs.

        Args:
            extract_fields: Dictionary mapping field names to functions that receive the
                call's arguments and return the value to log
            format_string: Custom format string for log entry. Use {field_name} for replacements

        Example:
            extract_fields = {
                'mode': lambda config: config.mode,
                'seeds': lambda config: len(config.seeds),
            }
        """
        def decorator(run_func):
            @wraps(run_func)
            def wrapper(*args, **kwargs):
                fields = {'timestamp': self._timestamp(), 'run': run_func.__name__}
                if extract_fields:
                    for field_name, extractor in extract_fields.items():
                        try:
                            fields[field_name] = extractor(*args, **kwargs)
                        except Exception as e:
                            fields[field_name] = f"error:{str(e)}"

                if format_string:
                    log_entry = format_string.format(**fields)
                else:
                    # Default format: timestamp:run:field1:field2:...
                    log_entry = ':'.join(str(value) for value in fields.values())

                self._write_log(log_entry)
                return run_func(*args, **kwargs)
            return wrapper
        return decorator


logger = Logger()
