import errno
import socket

import pytest

from gbe_nav._internal import (
    MonitoredThread,
    reserve_sock_addr,
    split_evenly
)


def test_monitored_thread():
    def fail():
        raise RuntimeError(42)

    thread = MonitoredThread(target=fail)
    thread.start()
    thread.join()

    assert isinstance(thread.exception, RuntimeError)
    assert thread.exception.args == (42, )
    assert thread.state == "FAILED"


def test_monitored_thread_success():
    thread = MonitoredThread(target=lambda: None)
    thread.start()
    thread.join()

    assert thread.exception is None
    assert thread.state == "SUCCEEDED"


def test_reserve_sock_addr():
    with reserve_sock_addr() as (host, port):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        with pytest.raises(OSError) as exc_info:
            sock.bind((host, port))

        # Ensure that the iterator holds the sockets open.
        assert exc_info.value.errno in [errno.EADDRINUSE, errno.EADDRNOTAVAIL]


@pytest.mark.parametrize("items,n_chunks,expected", [
    ([1, 2, 3, 4, 5], 2, [[1, 2, 3], [4, 5]]),
    ([1, 2, 3], 3, [[1], [2], [3]]),
    ([1, 2], 4, [[1], [2]]),
    ([], 3, [[]]),
])
def test_split_evenly(items, n_chunks, expected):
    assert split_evenly(items, n_chunks) == expected


def test_split_evenly_failure():
    with pytest.raises(ValueError):
        split_evenly([1], 0)
