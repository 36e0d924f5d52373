# utils/reporting.py
"""
Report files for evaluation, sweeps and schedule tables
"""
import json
import logging
import os
from datetime import datetime

import pandas as pd

from xdlm_pipeline.config.settings import Config


class ReportGenerator:
    @staticmethod
    def report_dir(output_dir):
        path = os.path.join(output_dir, Config.DIR_STRUCTURE['reports'])
        os.makedirs(path, exist_ok=True)
        return path

    @staticmethod
    def generate_eval_report(reports, output_dir, name="eval"):
        """
        Write EvalReports as JSON (scores to 2 decimals) and CSV (full precision).
        Returns (json_path, csv_path).
        """
        report_dir = ReportGenerator.report_dir(output_dir)
        report_time = datetime.now().strftime('%Y%m%d_%H%M%S')
        json_path = os.path.join(report_dir, f"{name}_report.json")
        csv_path = os.path.join(report_dir, f"{name}_report.csv")

        payload = {
            'generated_at': report_time,
            'reports': [report.to_dict(digits=2) for report in reports],
        }
        with open(json_path, 'w') as f:
            json.dump(payload, f, indent=2)
        pd.DataFrame([report.to_dict() for report in reports]).to_csv(csv_path, index=False)

        logging.info(f"Generated {name} report: {json_path}, {csv_path}")
        return json_path, csv_path

    @staticmethod
    def generate_table(frame, output_dir, name):
        """Write a DataFrame (sweep rows, schedule table) to reports/{name}.csv."""
        csv_path = os.path.join(ReportGenerator.report_dir(output_dir), f"{name}.csv")
        frame.to_csv(csv_path, index=False)
        logging.info(f"Generated {name} table: {csv_path}")
        return csv_path

    @staticmethod
    def write_json(record, output_dir, name):
        path = os.path.join(ReportGenerator.report_dir(output_dir), f"{name}.json")
        with open(path, 'w') as f:
            json.dump(record, f, indent=2)
        logging.info(f"Wrote {path}")
        return path
