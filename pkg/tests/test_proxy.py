"""Shaping proxy: transparency, fail-closed guards, onion behavior."""

import http.client
import json
import random
import socket

import pytest

from conftest import StubUpstream
from shapegate.errors import StartupError
from shapegate.interceptors import (REASON_MAGIC_MISMATCH, REASON_MALWARE,
                                    REASON_OVERSIZE, REASON_PASSWORD,
                                    REASON_PASSWORD_MISSING,
                                    REASON_TYPE_NOT_ALLOWED)
from shapegate.policy import (HeaderDirective, HstsPolicy, PasswordPolicy,
                              PolicyDocument, Route, UploadPolicy)
from shapegate.proxy import ShapingProxy, build_chain

HOP_BY_HOP = {"connection", "transfer-encoding", "keep-alive", "upgrade",
              "proxy-authenticate", "proxy-authorization", "te", "trailer"}

MINIMAL_PDF = (b"%PDF-1.4\n1 0 obj\n<< /Type /Catalog >>\nendobj\n%%EOF\n")


def hardened_policy(**overrides):
    base = dict(
        headers={
            "Content-Security-Policy": HeaderDirective(
                value="default-src 'self'; object-src 'none'; frame-ancestors 'none'"),
            "X-Content-Type-Options": HeaderDirective(value="nosniff"),
            "X-Frame-Options": HeaderDirective(value="DENY"),
            "X-XSS-Protection": HeaderDirective(value="1; mode=block"),
        },
        uploads=UploadPolicy(routes=[Route(method="POST", path="/upload")],
                             max_size_bytes=4096, sanitize_pdf=True,
                             signatures=["6576696c5f7369676e6174757265"]),
        passwords=PasswordPolicy(routes=[Route(method="POST", path="/signup")]),
    )
    base.update(overrides)
    return PolicyDocument(**base)


def request(proxy_or_port, method, path, body=None, headers=None):
    port = proxy_or_port if isinstance(proxy_or_port, int) else proxy_or_port.port
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    try:
        conn.request(method, path, body=body, headers=headers or {})
        resp = conn.getresponse()
        return resp.status, resp.reason, resp.getheaders(), resp.read()
    finally:
        conn.close()


def multipart_body(filename, payload, boundary="B0UNDARY"):
    return (f"--{boundary}\r\nContent-Disposition: form-data; "
            f'name="file"; filename="{filename}"\r\n\r\n'.encode()
            + payload + f"\r\n--{boundary}--\r\n".encode()), boundary


class TestPassThrough:
    def test_get_proxies_upstream_response(self, stub_upstream):
        stub_upstream.routes["/hello"] = (
            200, [("Content-Type", "text/plain"), ("X-Custom", "yes")], b"hi there")
        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            status, _, headers, body = request(proxy, "GET", "/hello")
        assert status == 200
        assert body == b"hi there"
        assert ("X-Custom", "yes") in headers

    def test_transparency_on_randomized_responses(self, stub_upstream):
        rng = random.Random(20260810)
        statuses = [200, 201, 203, 206, 300, 400, 403, 404, 410, 418, 500, 503]
        cases = []
        for i in range(100):
            path = f"/r/{i}"
            extra = [(f"X-R-{rng.randint(0, 5)}", f"v{rng.randint(0, 9)}")]
            if rng.random() < 0.3:
                extra.append(("Set-Cookie", f"c{i}=v{i}; Path=/"))
            body = rng.randbytes(rng.randint(0, 2048))
            stub_upstream.routes[path] = (
                rng.choice(statuses),
                [("Content-Type", "application/octet-stream")] + extra, body)
            cases.append(path)

        def normalize(headers):
            return sorted((name.lower(), value) for name, value in headers
                          if name.lower() not in HOP_BY_HOP
                          and name.lower() != "date")

        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            for path in cases:
                d_status, d_reason, d_headers, d_body = request(
                    stub_upstream.port, "GET", path)
                p_status, p_reason, p_headers, p_body = request(proxy, "GET", path)
                assert (p_status, p_reason) == (d_status, d_reason), path
                assert p_body == d_body, path
                assert normalize(p_headers) == normalize(d_headers), path

    def test_post_streams_to_upstream_unguarded(self, stub_upstream):
        echoed = {}
        stub_upstream.routes["/echo"] = (
            200, [("Content-Type", "text/plain")],
            lambda request_body: echoed.setdefault("body", request_body) or b"ok")
        payload = bytes(range(256)) * 512  # 128 KiB
        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            status, _, _, _ = request(proxy, "POST", "/echo", body=payload)
        assert status == 200
        assert echoed["body"] == payload

    def test_head_request(self, stub_upstream):
        stub_upstream.routes["/doc"] = (200, [("Content-Type", "text/plain")], b"12345")
        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            status, _, headers, body = request(proxy, "HEAD", "/doc")
        assert status == 200
        assert body == b""
        assert dict((k.lower(), v) for k, v in headers)["content-length"] == "5"


class TestHeaderInjection:
    def test_injected_on_success(self, stub_upstream):
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            _, _, headers, _ = request(proxy, "GET", "/")
        names = {name.lower() for name, _ in headers}
        assert {"content-security-policy", "x-content-type-options",
                "x-frame-options", "x-xss-protection"} <= names

    def test_override_false_keeps_upstream_value(self, stub_upstream):
        stub_upstream.routes["/framed"] = (
            200, [("Content-Type", "text/html"), ("X-Frame-Options", "SAMEORIGIN")],
            b"<html></html>")
        policy = PolicyDocument(headers={
            "X-Frame-Options": HeaderDirective(value="DENY", override=False)})
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            _, _, headers, _ = request(proxy, "GET", "/framed")
        values = [v for k, v in headers if k.lower() == "x-frame-options"]
        assert values == ["SAMEORIGIN"]

    def test_hsts_injected_when_enabled(self, stub_upstream):
        policy = PolicyDocument(hsts=HstsPolicy(enabled=True))
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            _, _, headers, _ = request(proxy, "GET", "/")
        values = [v for k, v in headers if k.lower() == "strict-transport-security"]
        assert values == ["max-age=31536000; includeSubDomains"]


class TestUploadGuard:
    def test_oversize_rejected_before_upstream(self, stub_upstream):
        policy = hardened_policy()
        oversize = b"x" * (policy.uploads.max_size_bytes + 1)
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            status, _, headers, body = request(
                proxy, "POST", "/upload", body=oversize,
                headers={"Content-Type": "application/octet-stream"})
        assert status == 413
        assert json.loads(body)["reason"] == REASON_OVERSIZE
        assert stub_upstream.hits == []
        names = {name.lower() for name, _ in headers}
        assert "x-frame-options" in names  # rejection still header-injected

    def test_multipart_pdf_allowed_and_sanitized(self, stub_upstream):
        seen = {}
        stub_upstream.routes["/upload"] = (
            200, [("Content-Type", "application/json")],
            lambda request_body: seen.setdefault("body", request_body) or b"{}")
        dirty = MINIMAL_PDF.replace(b"/Catalog", b"/Catalog /OpenAction 3 0 R")
        body, boundary = multipart_body("report.pdf", dirty)
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, _ = request(
                proxy, "POST", "/upload", body=body,
                headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})
        assert status == 200
        assert len(stub_upstream.hits) == 1
        assert b"/OpenAction" not in seen["body"]
        assert b"/XXXXXXXXXX" in seen["body"]
        assert len(seen["body"]) == len(body)

    def test_multipart_disallowed_extension(self, stub_upstream):
        body, boundary = multipart_body("tool.exe", b"MZ\x90\x00")
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/upload", body=body,
                headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})
        assert status == 415
        assert json.loads(payload)["reason"] == REASON_TYPE_NOT_ALLOWED
        assert stub_upstream.hits == []

    def test_multipart_magic_mismatch(self, stub_upstream):
        body, boundary = multipart_body("photo.png", b"definitely not a png")
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/upload", body=body,
                headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})
        assert status == 415
        assert json.loads(payload)["reason"] == REASON_MAGIC_MISMATCH
        assert stub_upstream.hits == []

    def test_malware_signature_rejected(self, stub_upstream):
        body, boundary = multipart_body("notes.txt", b"hello evil_signature world")
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/upload", body=body,
                headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})
        assert status == 422
        assert json.loads(payload)["reason"] == REASON_MALWARE
        assert stub_upstream.hits == []

    def test_unparsable_multipart_fails_closed(self, stub_upstream):
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/upload", body=b"--nope\r\ngarbage",
                headers={"Content-Type": "multipart/form-data; boundary=other"})
        assert status == 415
        assert json.loads(payload)["reason"] == REASON_TYPE_NOT_ALLOWED
        assert stub_upstream.hits == []

    def test_unguarded_route_untouched(self, stub_upstream):
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, _ = request(proxy, "POST", "/other", body=b"anything")
        assert status == 200
        assert len(stub_upstream.hits) == 1


class TestPasswordGate:
    def test_weak_password_rejected(self, stub_upstream):
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/signup", body=b"password=password",
                headers={"Content-Type": "application/x-www-form-urlencoded"})
        assert status == 422
        assert json.loads(payload)["reason"] == REASON_PASSWORD
        assert stub_upstream.hits == []

    def test_missing_field_rejected(self, stub_upstream):
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, payload = request(
                proxy, "POST", "/signup", body=b"email=a@b.c",
                headers={"Content-Type": "application/x-www-form-urlencoded"})
        assert status == 422
        assert json.loads(payload)["reason"] == REASON_PASSWORD_MISSING
        assert stub_upstream.hits == []

    def test_strong_password_forwarded(self, stub_upstream):
        body = json.dumps({"email": "a@b.c", "password": "Tr4nsparent-Shaping!"})
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, _ = request(
                proxy, "POST", "/signup", body=body.encode(),
                headers={"Content-Type": "application/json"})
        assert status == 200
        assert len(stub_upstream.hits) == 1

    def test_json_weak_password_rejected(self, stub_upstream):
        body = json.dumps({"password": "short"})
        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            status, _, _, _ = request(
                proxy, "POST", "/signup", body=body.encode(),
                headers={"Content-Type": "application/json"})
        assert status == 422
        assert stub_upstream.hits == []


class TestFailureModes:
    def test_upstream_down_yields_502_with_headers(self):
        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            dead_port = sock.getsockname()[1]
        with ShapingProxy(hardened_policy(), f"http://127.0.0.1:{dead_port}/") as proxy:
            status, _, headers, payload = request(proxy, "GET", "/")
        assert status == 502
        assert json.loads(payload)["reason"] == "upstream unreachable"
        assert "x-frame-options" in {name.lower() for name, _ in headers}

    def test_crashing_interceptor_fails_closed(self, stub_upstream):
        from shapegate.proxy import Interceptor

        class Boom(Interceptor):
            name = "boom"

            def pre(self, request):
                raise RuntimeError("kaboom")

        policy = hardened_policy()
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            proxy._server.chain.interceptors.insert(0, Boom())
            status, _, headers, payload = request(proxy, "GET", "/")
        assert status == 500
        assert json.loads(payload)["reason"] == "interceptor failure"
        assert "x-frame-options" in {name.lower() for name, _ in headers}
        assert stub_upstream.hits == []

    def test_bind_conflict_raises_startup_error(self, stub_upstream):
        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            with pytest.raises(StartupError):
                ShapingProxy(PolicyDocument(), stub_upstream.url,
                             port=proxy.port).start()

    def test_bad_upstream_url_rejected(self):
        with pytest.raises(StartupError):
            ShapingProxy(PolicyDocument(), "ftp://nope/")


class TestPlumbing:
    def test_delete_passes_through(self, stub_upstream):
        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            status, _, _, _ = request(proxy, "DELETE", "/resource/7")
        assert status == 200
        assert stub_upstream.hits == [("DELETE", "/resource/7")]

    def test_concurrent_requests(self, stub_upstream):
        import threading

        stub_upstream.routes["/slow"] = (200, [("Content-Type", "text/plain")], b"done")
        results = []
        lock = threading.Lock()

        def worker(i):
            status, _, _, body = request(proxy, "GET", f"/slow?i={i}")
            with lock:
                results.append((status, body))

        with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
            threads = [threading.Thread(target=worker, args=(i,)) for i in range(20)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join(timeout=10)
        assert results == [(200, b"done")] * 20

    def test_chunked_request_reframed_with_content_length(self, stub_upstream):
        captured = {}
        stub_upstream.routes["/sink"] = (
            200, [("Content-Type", "text/plain")],
            lambda request_body: captured.setdefault("body", request_body) or b"ok")
        payload = b"hello " * 1000

        def chunks():
            for i in range(0, len(payload), 512):
                yield payload[i:i + 512]

        with ShapingProxy(PolicyDocument(), stub_upstream.url) as proxy:
            conn = http.client.HTTPConnection("127.0.0.1", proxy.port, timeout=10)
            try:
                conn.request("POST", "/sink", body=chunks())  # sends chunked
                resp = conn.getresponse()
                assert resp.status == 200
                resp.read()
            finally:
                conn.close()
        assert captured["body"] == payload

    def test_access_log_line_format(self, stub_upstream, caplog):
        import logging
        import re

        with caplog.at_level(logging.INFO, logger="shapegate.access"):
            with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
                request(proxy, "GET", "/logged")
        lines = [record.getMessage() for record in caplog.records
                 if record.name == "shapegate.access"]
        assert len(lines) == 1
        fields = lines[0].split("\t")
        assert len(fields) == 6
        timestamp, method, path, outcome, status, latency = fields
        assert re.match(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z$", timestamp)
        assert (method, path, outcome, status) == ("GET", "/logged", "continue", "200")
        assert float(latency) >= 0

    def test_rejections_logged_as_reject(self, stub_upstream, caplog):
        import logging

        with caplog.at_level(logging.INFO, logger="shapegate.access"):
            with ShapingProxy(hardened_policy(), stub_upstream.url) as proxy:
                request(proxy, "POST", "/signup", body=b"x=1",
                        headers={"Content-Type": "application/x-www-form-urlencoded"})
        line = [r.getMessage() for r in caplog.records
                if r.name == "shapegate.access"][0]
        assert line.split("\t")[3] == "reject"


class TestGlobRoutes:
    def test_raw_body_upload_with_path_filename(self, stub_upstream):
        seen = {}
        stub_upstream.routes["/files/report.pdf"] = (
            201, [("Content-Type", "application/json")],
            lambda request_body: seen.setdefault("body", request_body) or b"{}")
        policy = hardened_policy(
            uploads=UploadPolicy(routes=[Route(method="PUT", path="/files/*")],
                                 max_size_bytes=4096, sanitize_pdf=True))
        dirty = MINIMAL_PDF.replace(b"/Catalog", b"/Catalog /Launch (x)")
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            status, _, _, _ = request(proxy, "PUT", "/files/report.pdf", body=dirty)
        assert status == 201
        assert b"/Launch" not in seen["body"]
        assert len(seen["body"]) == len(dirty)

    def test_raw_body_upload_without_extension_rejected(self, stub_upstream):
        policy = hardened_policy(
            uploads=UploadPolicy(routes=[Route(method="PUT", path="/files/*")],
                                 max_size_bytes=4096))
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            status, _, _, payload = request(proxy, "PUT", "/files/noext", body=b"data")
        assert status == 415
        assert json.loads(payload)["reason"] == REASON_TYPE_NOT_ALLOWED
        assert stub_upstream.hits == []


class TestChain:
    def test_chain_order(self):
        chain = build_chain(hardened_policy())
        assert chain.names == ["password-gate", "upload-guard", "header-inject"]

    def test_reject_requires_reason(self):
        from shapegate.proxy import InterceptorOutcome

        with pytest.raises(ValueError):
            InterceptorOutcome.reject(415, "")

    def test_all_responses_carry_policy_headers(self, stub_upstream):
        # Random mix of successes, rejections and misses.
        policy = hardened_policy()
        rng = random.Random(5)
        with ShapingProxy(policy, stub_upstream.url) as proxy:
            for _ in range(60):
                kind = rng.choice(["ok", "miss", "upload-bad", "password-bad"])
                if kind == "ok":
                    _, _, headers, _ = request(proxy, "GET", "/")
                elif kind == "miss":
                    _, _, headers, _ = request(proxy, "GET", f"/missing/{rng.random()}")
                elif kind == "upload-bad":
                    _, _, headers, _ = request(
                        proxy, "POST", "/upload", body=b"x",
                        headers={"Content-Type": "application/octet-stream"})
                else:
                    _, _, headers, _ = request(
                        proxy, "POST", "/signup", body=b"password=123",
                        headers={"Content-Type": "application/x-www-form-urlencoded"})
                names = {name.lower() for name, _ in headers}
                for header_name in policy.headers:
                    assert header_name.lower() in names
