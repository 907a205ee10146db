"""Thin HTTP client for the portal API (stdlib urllib only)."""

from __future__ import annotations

import json
import urllib.error
import urllib.parse
import urllib.request


class PortalError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.status = status
        self.code = code


class PortalUnreachable(PortalError):
    def __init__(self, message: str):
        super().__init__(0, "PortalUnreachable", message)


class PortalClient:
    def __init__(self, base_url: str, token: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def request(self, method: str, path: str, body: dict | None = None,
                query: dict | None = None):
        url = self.base_url + path
        if query:
            url += "?" + urllib.parse.urlencode(query)
        data = json.dumps(body).encode("utf-8") if body is not None else None
        req = urllib.request.Request(
            url,
            data=data,
            method=method,
            headers={"Content-Type": "application/json", "X-Proxy-Token": self.token},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            try:
                obj = json.loads(detail)
                raise PortalError(exc.code, obj.get("error", "Error"),
                                  obj.get("message", detail)) from None
            except ValueError:
                raise PortalError(exc.code, "Error", detail) from None
        except urllib.error.URLError as exc:
            raise PortalUnreachable(f"cannot reach portal at {self.base_url}: {exc.reason}") from None

    # -- convenience wrappers ------------------------------------------------

    def register_resource(self, record: dict) -> str:
        return self.request("POST", "/resources", body=record)["site_id"]

    def list_resources(self) -> list[dict]:
        return self.request("GET", "/resources")

    def probe(self, site_id: str) -> dict:
        return self.request("POST", f"/resources/{site_id}/probe")

    def define_active_set(self, name: str, site_ids: list[str]) -> dict:
        return self.request("POST", "/active-sets", body={"name": name, "site_ids": site_ids})

    def list_active_sets(self) -> list[dict]:
        return self.request("GET", "/active-sets")

    def submit_jobset(self, spec: dict) -> str:
        return self.request("POST", "/jobsets", body=spec)["jobset_id"]

    def list_jobsets(self) -> list[dict]:
        return self.request("GET", "/jobsets")

    def get_jobset(self, jobset_id: str) -> dict:
        return self.request("GET", f"/jobsets/{jobset_id}")

    def resubmit(self, jobset_id: str) -> str:
        return self.request("POST", f"/jobsets/{jobset_id}/resubmit")["jobset_id"]

    def jobs(self, jobset_id: str) -> list[dict]:
        return self.request("GET", "/jobs", query={"jobset": jobset_id})

    def poll(self, job_ids: list[str]) -> list[dict]:
        return self.request("POST", "/jobs/poll", body={"job_ids": job_ids})

    def cancel(self, job_ids: list[str]) -> list[dict]:
        return self.request("POST", "/jobs/cancel", body={"job_ids": job_ids})

    def summary(self, jobset_id: str) -> dict:
        return self.request("GET", f"/jobsets/{jobset_id}/summary")

    def replicas(self, name: str) -> dict:
        return self.request("GET", "/replicas", query={"name": name})

    def file_content(self, uri: str) -> bytes:
        url = self.base_url + "/files?" + urllib.parse.urlencode({"uri": uri})
        req = urllib.request.Request(url, headers={"X-Proxy-Token": self.token})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            raise PortalError(exc.code, "Error", exc.read().decode("utf-8", "replace")) from None
        except urllib.error.URLError as exc:
            raise PortalUnreachable(f"cannot reach portal at {self.base_url}: {exc.reason}") from None
