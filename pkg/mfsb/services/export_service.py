"""
Export Service
Renders evaluation reports and results tables as CSV or markdown
"""

import io
from pathlib import Path
from typing import Dict, Iterable, List, Literal

import pandas as pd

from mfsb.models.report import REPORT_COLUMNS, EvalReport, ResultsRow, ResultsTable, percent
from mfsb.utils.errors import ConfigError
from mfsb.utils.logger import app_logger

TABLE_COLUMNS = ["method", "S", "U", "HM", "AUC"]

OutputFormat = Literal["csv", "markdown"]


class ExportService:
    """Service for exporting results to different formats"""

    def reports_frame(self, reports: Iterable[EvalReport]) -> pd.DataFrame:
        """One row per report: method,world,S,U,HM,AUC"""
        return pd.DataFrame([r.csv_row() for r in reports], columns=REPORT_COLUMNS)

    def reports_to_csv(self, reports: Iterable[EvalReport]) -> str:
        return self.reports_frame(reports).to_csv(index=False, lineterminator="\n")

    def table_frame(self, table: ResultsTable, rows: Iterable[ResultsRow] = None) -> pd.DataFrame:
        rows = table.rows if rows is None else rows
        return pd.DataFrame(
            [
                {
                    "method": row.method,
                    "world": table.world,
                    "S": percent(row.seen),
                    "U": percent(row.unseen),
                    "HM": percent(row.hm),
                    "AUC": percent(row.auc),
                }
                for row in rows
            ],
            columns=REPORT_COLUMNS,
        )

    def per_seed_frame(self, table: ResultsTable) -> pd.DataFrame:
        """Per-seed values behind each mean row"""
        records = []
        for method, rows in table.per_seed.items():
            for seed_index, row in enumerate(rows):
                records.append({
                    "method": method,
                    "world": table.world,
                    "seed_index": seed_index,
                    "S": percent(row.seen),
                    "U": percent(row.unseen),
                    "HM": percent(row.hm),
                    "AUC": percent(row.auc),
                })
        return pd.DataFrame(records, columns=["method", "world", "seed_index", "S", "U", "HM", "AUC"])

    def emit_results_table(self, table: ResultsTable, fmt: OutputFormat = "markdown") -> str:
        """
        Render a results table

        Args:
            table: Results table
            fmt: 'csv' (method,world,S,U,HM,AUC) or 'markdown' (method | S | U | HM | AUC)

        Returns:
            Rendered text

        Raises:
            ConfigError: empty table or unknown format
        """
        if not table.rows:
            raise ConfigError("Results table is empty")
        frame = self.table_frame(table)
        if fmt == "csv":
            text = frame.to_csv(index=False, lineterminator="\n")
        elif fmt == "markdown":
            # numparse off keeps trailing zeros such as 7.30; method labels carry pipes
            frame = frame.assign(method=frame["method"].str.replace("|", r"\|", regex=False))
            text = frame[TABLE_COLUMNS].to_markdown(index=False, disable_numparse=True) + "\n"
        else:
            raise ConfigError(f"Unknown output format: {fmt}", key="format")

        app_logger.debug("results_table_emitted", world=table.world, rows=len(table.rows), format=fmt)
        return text

    def parse_results_csv(self, text: str) -> List[ResultsTable]:
        """
        Read CSV emitted by emit_results_table (or a report.csv) back into tables,
        one per world in order of first appearance
        """
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
        missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
        if missing:
            raise ConfigError(f"Results CSV lacks columns: {missing}")
        tables: Dict[str, ResultsTable] = {}
        for record in frame.to_dict("records"):
            table = tables.setdefault(record["world"], ResultsTable(world=record["world"]))
            table.rows.append(ResultsRow(
                method=record["method"],
                seen=float(record["S"]) / 100,
                unseen=float(record["U"]) / 100,
                hm=float(record["HM"]) / 100,
                auc=float(record["AUC"]) / 100,
            ))
        return list(tables.values())

    def write_table(self, table: ResultsTable, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.emit_results_table(table, "csv"), encoding="utf-8")
        return path

    def write_per_seed(self, table: ResultsTable, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.per_seed_frame(table).to_csv(path, index=False, lineterminator="\n")
        return path


# Global export service instance
export_service = ExportService()
