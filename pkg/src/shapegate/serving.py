"""Shared threaded HTTP server that stays quiet on client disconnects."""

import logging
import ssl
import sys
from http.server import ThreadingHTTPServer

log = logging.getLogger(__name__)

_DISCONNECT_ERRORS = (ConnectionError, BrokenPipeError, TimeoutError,
                      ssl.SSLError)


class QuietHTTPServer(ThreadingHTTPServer):
    """Clients hanging up mid-response are routine, not tracebacks."""

    daemon_threads = True

    def handle_error(self, request, client_address):
        exc = sys.exc_info()[1]
        if isinstance(exc, _DISCONNECT_ERRORS):
            log.debug("client %s disconnected: %s", client_address, exc)
            return
        super().handle_error(request, client_address)
