"""Demo origin personas and endpoints."""

import http.client
import json
import ssl

import pytest

from shapegate.demo_origin import DemoOrigin
from shapegate.errors import StartupError


def _tls_conn(origin):
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_NONE
    return http.client.HTTPSConnection("127.0.0.1", origin.https_port,
                                       timeout=10, context=ctx)


def _get(origin, path):
    conn = _tls_conn(origin)
    try:
        conn.request("GET", path)
        resp = conn.getresponse()
        return resp.status, dict((k.lower(), v) for k, v in resp.getheaders()), resp.read()
    finally:
        conn.close()


def _post(origin, path, body, content_type="application/octet-stream"):
    conn = _tls_conn(origin)
    try:
        conn.request("POST", path, body=body, headers={"Content-Type": content_type})
        resp = conn.getresponse()
        return resp.status, resp.read()
    finally:
        conn.close()


class TestBeforePersona:
    def test_index_has_one_same_origin_script_and_no_security_headers(self, demo_before):
        status, headers, body = _get(demo_before, "/")
        assert status == 200
        assert body.count(b"<script") == 1
        assert b'src="/static/app.js"' in body
        for name in ("content-security-policy", "strict-transport-security",
                     "x-content-type-options", "x-frame-options",
                     "x-xss-protection", "set-cookie", "referrer-policy",
                     "access-control-allow-origin"):
            assert name not in headers, name

    def test_script_asset_served(self, demo_before):
        status, headers, _ = _get(demo_before, "/static/app.js")
        assert status == 200
        assert "javascript" in headers["content-type"]

    def test_upload_accepts_any_body(self, demo_before):
        status, body = _post(demo_before, "/upload", b"\x00\x01binary junk")
        assert status == 200
        assert json.loads(body)["stored"] is True

    def test_signup_accepts_any_password(self, demo_before):
        status, body = _post(demo_before, "/signup", b"password=123",
                             "application/x-www-form-urlencoded")
        assert status == 200
        assert json.loads(body) == {"created": True}

    def test_http_listener_redirects_to_https_same_host(self, demo_before):
        conn = http.client.HTTPConnection("127.0.0.1", demo_before.http_port, timeout=10)
        try:
            conn.request("GET", "/some/path?q=1")
            resp = conn.getresponse()
            location = resp.getheader("Location")
        finally:
            conn.close()
        assert resp.status == 301
        assert location == (f"https://127.0.0.1:{demo_before.https_port}/some/path?q=1")

    def test_unknown_path_404(self, demo_before):
        status, _, _ = _get(demo_before, "/missing")
        assert status == 404

    def test_requests_are_recorded(self, demo_before):
        before_count = demo_before.upstream_hits
        _get(demo_before, "/")
        assert demo_before.upstream_hits == before_count + 1
        assert demo_before.requests_seen[-1] == ("GET", "/")


class TestHardenedPersona:
    def test_pass_row_headers_present(self, demo_hardened):
        _, headers, _ = _get(demo_hardened, "/")
        assert headers["x-content-type-options"] == "nosniff"
        assert headers["x-frame-options"] == "DENY"
        assert headers["x-xss-protection"] == "1; mode=block"
        assert headers["strict-transport-security"].startswith("max-age=31536000")
        assert "unsafe-inline" not in headers["content-security-policy"]
        assert headers["referrer-policy"] == "strict-origin-when-cross-origin"

    def test_cert_fingerprint_available(self, demo_hardened):
        assert demo_hardened.cert_fingerprint
        assert len(demo_hardened.cert_fingerprint) == 64


class TestLifecycle:
    def test_unknown_persona_rejected(self):
        with pytest.raises(ValueError):
            DemoOrigin(persona="evil")

    def test_bind_conflict_raises_startup_error(self, demo_before):
        with pytest.raises(StartupError):
            DemoOrigin(https_port=demo_before.https_port).start()
