#!/usr/bin/env python3
# === result_store.py ===
# Optional MongoDB sink for simulation sweep rows (simulate --store mongo).

import os
import time
import logging
from datetime import datetime, timezone
from urllib.parse import quote_plus

from dotenv import load_dotenv
from pymongo import MongoClient
from pymongo.errors import ConnectionFailure, PyMongoError, ServerSelectionTimeoutError

DEFAULT_DB = "uav_planner"
DEFAULT_COLLECTION = "sweep_results"


def mongo_uri():
    """Connection string from MONGO_* variables; credentials are optional."""
    load_dotenv()
    host = os.getenv("MONGO_HOST", "localhost")
    port = os.getenv("MONGO_PORT", "27017")
    user = os.getenv("MONGO_USER")
    password = os.getenv("MONGO_PASS")
    if user and password:
        return f"mongodb://{quote_plus(user)}:{quote_plus(password)}@{host}:{port}/"
    return f"mongodb://{host}:{port}/"


def connect_to_mongodb(max_retries=3, retry_delay=2):
    """Connect to MongoDB with retry logic"""
    load_dotenv()
    db_name = os.getenv("MONGO_DB", DEFAULT_DB)
    for attempt in range(max_retries):
        try:
            logging.info(f"Connecting to MongoDB (attempt {attempt + 1}/{max_retries})...")
            client = MongoClient(mongo_uri(), serverSelectionTimeoutMS=5000)
            # Force a round trip so a dead server fails here
            client.admin.command("ping")
            logging.info(f"Connected to MongoDB, database: {db_name}")
            return client, db_name
        except (ConnectionFailure, ServerSelectionTimeoutError) as e:
            if attempt < max_retries - 1:
                logging.warning(f"MongoDB connection failed: {e}. Retrying in {retry_delay} seconds...")
                time.sleep(retry_delay)
            else:
                logging.error(f"Failed to connect to MongoDB after {max_retries} attempts: {e}")
                raise


def store_sweep_rows(rows, provenance, client=None):
    """Insert one document per sweep row and read each back; returns the number stored.

    Any database failure is logged and ends the upload early; the CSV written by
    the caller is unaffected.
    """
    stored = 0
    owns_client = client is None
    try:
        if owns_client:
            client, db_name = connect_to_mongodb(max_retries=3, retry_delay=2)
        else:
            db_name = os.getenv("MONGO_DB", DEFAULT_DB)
        collection = client[db_name][os.getenv("MONGO_COLLECTION", DEFAULT_COLLECTION)]
        stamp = datetime.now(timezone.utc).isoformat()
        for row in rows:
            document = dict(row)
            document["provenance"] = provenance
            document["stored_at"] = stamp
            result = collection.insert_one(document)
            if not result.acknowledged:
                raise PyMongoError(f"insert of row {row.get('method')}@{row.get('sweep_value')} not acknowledged")
            if collection.find_one({"_id": result.inserted_id}) is None:
                raise PyMongoError(f"document {result.inserted_id} was inserted but could not be read back")
            stored += 1
        logging.info(f"Stored {stored} sweep rows in MongoDB")
    except PyMongoError as e:
        logging.error(f"MongoDB upload stopped after {stored} rows: {e}")
    finally:
        if owns_client and client is not None:
            client.close()
    return stored
