"""
Run Ledger
SQLite record of every experiment run and world evaluation
"""

import sqlite3
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from mfsb.models.report import EvalReport


class RunLedger:
    """SQLite-backed history of experiment runs"""

    def __init__(self, db_path: Union[str, Path]):
        self.db_path = Path(db_path)
        self._init_database()

    def _connect(self) -> sqlite3.Connection:
        return sqlite3.connect(self.db_path)

    def _init_database(self):
        """Create the runs table if not exists"""
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                config_hash TEXT NOT NULL,
                method TEXT,
                seed INTEGER,
                world TEXT,
                status TEXT NOT NULL,
                seen REAL,
                unseen REAL,
                hm REAL,
                auc REAL,
                duration_ms INTEGER DEFAULT 0,
                cache_hit INTEGER DEFAULT 0,
                error_message TEXT,
                timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)

        cursor.execute("""
            CREATE INDEX IF NOT EXISTS idx_runs_config
            ON runs(config_hash, world)
        """)

        conn.commit()
        conn.close()

    def record_run(
        self,
        config_hash: str,
        status: str,
        method: str = "",
        seed: Optional[int] = None,
        report: Optional[EvalReport] = None,
        duration_ms: int = 0,
        cache_hit: bool = False,
        error: Optional[str] = None,
    ) -> int:
        """Insert one ledger row; returns its id"""
        conn = self._connect()
        cursor = conn.cursor()
        cursor.execute("""
            INSERT INTO runs (
                config_hash, method, seed, world, status,
                seen, unseen, hm, auc,
                duration_ms, cache_hit, error_message
            ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """, (
            config_hash, method, seed,
            report.world if report else None,
            status,
            report.seen_acc if report else None,
            report.unseen_acc if report else None,
            report.harmonic_mean if report else None,
            report.auc if report else None,
            duration_ms, int(cache_hit), error,
        ))
        row_id = cursor.lastrowid
        conn.commit()
        conn.close()
        return row_id

    def recent_runs(self, limit: int = 20) -> List[Dict[str, Any]]:
        """Most recent rows first"""
        conn = self._connect()
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()
        cursor.execute("""
            SELECT * FROM runs
            ORDER BY id DESC
            LIMIT ?
        """, (limit,))
        rows = cursor.fetchall()
        conn.close()
        return [dict(row) for row in rows]

    def run_statistics(self) -> Dict[str, Any]:
        """Aggregate counts over the ledger"""
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute("SELECT COUNT(*) FROM runs")
        total = cursor.fetchone()[0]

        cursor.execute("SELECT COUNT(*) FROM runs WHERE status = 'success'")
        successful = cursor.fetchone()[0]

        cursor.execute("SELECT COUNT(*) FROM runs WHERE cache_hit = 1")
        cached = cursor.fetchone()[0]

        cursor.execute("SELECT AVG(duration_ms) FROM runs WHERE status = 'success' AND cache_hit = 0")
        avg_time = cursor.fetchone()[0] or 0

        cursor.execute("SELECT COUNT(DISTINCT config_hash) FROM runs")
        configs = cursor.fetchone()[0]

        conn.close()

        return {
            "total_runs": total,
            "successful_runs": successful,
            "failed_runs": total - successful,
            "cache_hits": cached,
            "distinct_configs": configs,
            "avg_duration_ms": avg_time,
        }
