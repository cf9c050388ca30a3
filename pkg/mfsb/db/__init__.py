"""
Database Package
Run ledger storage
"""

from mfsb.db.run_ledger import RunLedger

__all__ = ["RunLedger"]
