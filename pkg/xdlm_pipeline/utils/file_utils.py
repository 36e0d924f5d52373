# utils/file_utils.py
"""
File utility functions
"""
import logging
import os

from xdlm_pipeline.config.settings import Config


class FileUtils:
    @staticmethod
    def create_directories(output_dir):
        """Create the output directory structure if it doesn't exist"""
        os.makedirs(output_dir, exist_ok=True)
        for dir_name in Config.DIR_STRUCTURE.values():
            os.makedirs(os.path.join(output_dir, dir_name), exist_ok=True)

    @staticmethod
    def require_paths(*paths):
        """Raise FileNotFoundError naming the first missing path."""
        for path in paths:
            if path and not os.path.exists(path):
                logging.error(f"Missing input path: {path}")
                raise FileNotFoundError(f"no such file or directory: {path}")

    @staticmethod
    def write_lines(path, lines):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.writelines(f"{line}\n" for line in lines)
        logging.info(f"Wrote {len(lines)} lines to {path}")
        return path

    @staticmethod
    def snapshot_config(run_config, output_dir):
        """Write the resolved run configuration next to the command's outputs."""
        os.makedirs(output_dir, exist_ok=True)
        return run_config.snapshot(os.path.join(output_dir, Config.SNAPSHOT_FILE))
