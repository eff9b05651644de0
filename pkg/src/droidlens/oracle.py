"""Scan-report oracle client with an offline fixture mode.

Live mode speaks a REST shape compatible with common scan-report APIs:
GET <base_url>/report/<sha256> returning
``{"engines": {"<name>": {"detected": <bool>}, ...}}`` with the API key
in the ``x-apikey`` header.  Fixture mode replays the same JSON bodies
from ``<fixture_dir>/<sha256>.json`` so tests and air-gapped runs never
touch the network.
"""

from __future__ import annotations

import json
import os
import re
import time
from pathlib import Path

import numpy as np
import requests

from .dataset import Dataset, ScanVerdicts, consensus_label
from .errors import OracleError

API_KEY_ENV = "DROIDLENS_ORACLE_KEY"
_HASH_RE = re.compile(r"^[0-9a-fA-F]{8,128}$")


class LabelOracle:
    """Sequential, rate-limited verdict lookups.

    Exactly one of ``base_url`` / ``fixture_dir`` must be given.  The
    clock and sleep functions are injectable so rate limiting is
    testable without real delays.  Not thread-safe; one client per
    worker.
    """

    def __init__(
        self,
        base_url: str | None = None,
        fixture_dir=None,
        requests_per_minute: float = 4.0,
        api_key: str | None = None,
        session=None,
        clock=time.monotonic,
        sleep=time.sleep,
    ) -> None:
        if (base_url is None) == (fixture_dir is None):
            raise OracleError("configure exactly one of base_url or fixture_dir")
        if requests_per_minute <= 0:
            raise OracleError(f"requests_per_minute must be positive, got {requests_per_minute}")
        self._base_url = base_url.rstrip("/") if base_url else None
        self._fixture_dir = Path(fixture_dir) if fixture_dir is not None else None
        if self._fixture_dir is not None and not self._fixture_dir.is_dir():
            raise OracleError(f"fixture directory not found: {self._fixture_dir}")
        self._interval = 60.0 / requests_per_minute
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if self._base_url and not self._api_key:
            raise OracleError(f"live oracle needs an API key; set {API_KEY_ENV}")
        self._session = session
        self._clock = clock
        self._sleep = sleep
        self._last_request: float | None = None

    def _throttle(self) -> None:
        now = self._clock()
        if self._last_request is not None:
            wait = self._interval - (now - self._last_request)
            if wait > 0:
                self._sleep(wait)
                now = self._clock()
        self._last_request = now

    def fetch(self, file_hash: str) -> ScanVerdicts:
        file_hash = file_hash.strip().lower()
        if not _HASH_RE.match(file_hash):
            raise OracleError(f"malformed file hash: {file_hash!r}")
        if self._fixture_dir is not None:
            body = self._fetch_fixture(file_hash)
        else:
            body = self._fetch_live(file_hash)
        return _parse_report(file_hash, body)

    def _fetch_fixture(self, file_hash: str) -> dict:
        path = self._fixture_dir / f"{file_hash}.json"
        if not path.is_file():
            raise OracleError(f"no recorded report for {file_hash} in {self._fixture_dir}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise OracleError(f"unreadable fixture {path}: {exc}") from None

    def _fetch_live(self, file_hash: str) -> dict:
        self._throttle()
        if self._session is None:
            self._session = requests.Session()
        url = f"{self._base_url}/report/{file_hash}"
        try:
            resp = self._session.get(url, headers={"x-apikey": self._api_key}, timeout=30)
        except requests.RequestException as exc:
            raise OracleError(f"request failed for {file_hash}: {exc}") from None
        if resp.status_code == 404:
            raise OracleError(f"no report on record for {file_hash}")
        if resp.status_code != 200:
            raise OracleError(f"oracle returned HTTP {resp.status_code} for {file_hash}")
        try:
            return resp.json()
        except ValueError as exc:
            raise OracleError(f"non-JSON response for {file_hash}: {exc}") from None


def _parse_report(file_hash: str, body) -> ScanVerdicts:
    if not isinstance(body, dict) or not isinstance(body.get("engines"), dict):
        raise OracleError(f"report for {file_hash} lacks an 'engines' object")
    engines: dict[str, bool] = {}
    for name, entry in body["engines"].items():
        if not isinstance(entry, dict) or not isinstance(entry.get("detected"), bool):
            raise OracleError(
                f"report for {file_hash}: engine {name!r} lacks a boolean 'detected'"
            )
        engines[str(name)] = entry["detected"]
    return ScanVerdicts(file_hash=file_hash, engines=engines)


def relabel(ds: Dataset, oracle: LabelOracle, threshold: int = 1) -> Dataset:
    """Replace labels with the consensus verdict for each row id.

    Row ids must be the file hashes the histograms were extracted from.
    """
    labels = [consensus_label(oracle.fetch(row_id), threshold) for row_id in ds.ids]
    return Dataset(ids=ds.ids, features=ds.features, labels=np.array(labels, dtype=np.int64))
