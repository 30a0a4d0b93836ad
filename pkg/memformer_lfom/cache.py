import json
import logging
from pathlib import Path

from peewee import SQL
from peewee import AutoField
from peewee import CharField
from peewee import IntegerField
from peewee import Model
from peewee import SqliteDatabase
from peewee import TextField

from memformer_lfom.const import DEFAULT_CACHE_DIR
from memformer_lfom.const import __cache_version__

# we don't init the database here
db = SqliteDatabase(None)
logger = logging.getLogger(__name__)


class _RunCache(Model):
    id = AutoField()
    cache_version = CharField(max_length=20)
    run_params = TextField()
    run_index = IntegerField()
    record = TextField()

    class Meta:
        database = db
        constraints = [
            SQL(
                """
            UNIQUE (
                cache_version,
                run_params,
                run_index
                )
            ON CONFLICT REPLACE
            """
            )
        ]


class RunCache:
    """Finished training runs keyed by the sorted JSON of everything that shapes them."""

    @staticmethod
    def _sort_dict_recursively(obj):
        if isinstance(obj, dict):
            return {
                k: RunCache._sort_dict_recursively(v)
                for k in sorted(obj.keys())
                for v in [obj[k]]
            }
        elif isinstance(obj, list):
            return [RunCache._sort_dict_recursively(item) for item in obj]
        return obj

    def __init__(self, run_params: dict | None = None):
        if _RunCache._meta.database.database is None:
            init_db()
        self.replace_params(run_params)

    def replace_params(self, params: dict | None = None):
        if params is None:
            params = {}
        self.params = params
        params = self._sort_dict_recursively(params)
        self.run_params = json.dumps(params)

    def get(self, run_index: int) -> str | None:
        result = _RunCache.get_or_none(
            cache_version=__cache_version__,
            run_params=self.run_params,
            run_index=run_index,
        )
        return result.record if result else None

    def set(self, run_index: int, record: str):
        try:
            _RunCache.create(
                cache_version=__cache_version__,
                run_params=self.run_params,
                run_index=run_index,
                record=record,
            )
        except Exception as e:
            logger.debug(f"Error setting cache: {e}")


def init_db(remove_exists=False):
    cache_folder = DEFAULT_CACHE_DIR
    cache_folder.mkdir(parents=True, exist_ok=True)
    # No migrations: the schema version is part of the file name.
    cache_db_path = cache_folder / "runs.v1.db"
    if remove_exists and cache_db_path.exists():
        cache_db_path.unlink()
    db.init(
        str(cache_db_path),
        pragmas={
            "journal_mode": "wal",
            "busy_timeout": 1000,
        },
    )
    db.create_tables([_RunCache], safe=True)


def init_test_db():
    import os
    import tempfile

    fd, cache_db_path = tempfile.mkstemp(suffix=".db")
    os.close(fd)
    test_db = SqliteDatabase(
        cache_db_path,
        pragmas={
            "journal_mode": "wal",
            "busy_timeout": 1000,
        },
    )
    test_db.bind([_RunCache], bind_refs=False, bind_backrefs=False)
    test_db.connect()
    test_db.create_tables([_RunCache], safe=True)
    return test_db


def clean_test_db(test_db):
    test_db.drop_tables([_RunCache])
    test_db.close()
    db_path = Path(test_db.database)
    if db_path.exists():
        db_path.unlink()
    for suffix in ("-wal", "-shm"):
        extra = Path(str(db_path) + suffix)
        if extra.exists():
            extra.unlink()
