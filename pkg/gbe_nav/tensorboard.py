import logging
import os
from contextlib import contextmanager
from typing import Generator, Optional

from tensorboard import program

from gbe_nav import _internal

_logger = logging.getLogger(__name__)


DEFAULT_TERMINATION_TIMEOUT_SECONDS = 30


def get_termination_timeout():
    timeout = os.environ.get('TB_TERMINATION_TIMEOUT_SECONDS')
    if timeout is not None:
        timeout = int(timeout)
    else:
        timeout = DEFAULT_TERMINATION_TIMEOUT_SECONDS  # Set the default timeout
    return timeout


def start_tf_board(logdir: str) -> Optional[str]:
    """Serve ``logdir`` with an in-process TensorBoard, return its url."""
    try:
        tensorboard = program.TensorBoard()
        with _internal.reserve_sock_addr() as (h, p):
            tensorboard_url = f"http://{h}:{p}"
            argv = ['tensorboard', f"--logdir={logdir}", f"--port={p}"]
            tb_extra_args = os.getenv('TB_EXTRA_ARGS', "")
            if tb_extra_args:
                argv += tb_extra_args.split(' ')
            tensorboard.configure(argv)
        tensorboard.launch()
        _logger.info(f"Tensorboard listening on {tensorboard_url}")
        return tensorboard_url
    except Exception:
        _logger.exception("Cannot start tensorboard")
        return None


@contextmanager
def tensorboard_server(logdir: str) -> Generator[None, None, None]:
    thread = _internal.MonitoredThread(
        name="tensorboard",
        target=start_tf_board,
        args=(logdir,),
        daemon=True)
    thread.start()

    yield

    timeout = get_termination_timeout()
    thread.join(timeout)
