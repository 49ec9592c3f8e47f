from unittest import mock

from gbe_nav import tensorboard

MODULE_UNDER_TEST = "gbe_nav.tensorboard"


def test_get_termination_timeout(monkeypatch):
    monkeypatch.delenv("TB_TERMINATION_TIMEOUT_SECONDS", raising=False)
    assert tensorboard.get_termination_timeout() == tensorboard.DEFAULT_TERMINATION_TIMEOUT_SECONDS
    monkeypatch.setenv("TB_TERMINATION_TIMEOUT_SECONDS", "5")
    assert tensorboard.get_termination_timeout() == 5


def test_start_tf_board(monkeypatch):
    monkeypatch.setenv("TB_EXTRA_ARGS", "--reload_interval 1")
    with mock.patch(f"{MODULE_UNDER_TEST}.program") as program_mock, \
            mock.patch(f"{MODULE_UNDER_TEST}._internal.reserve_sock_addr") as reserve_mock:
        reserve_mock.return_value.__enter__.return_value = ("host", 1234)
        assert tensorboard.start_tf_board("/tmp/model") == "http://host:1234"

    board = program_mock.TensorBoard.return_value
    board.configure.assert_called_once_with(
        ["tensorboard", "--logdir=/tmp/model", "--port=1234", "--reload_interval", "1"])
    board.launch.assert_called_once()


def test_start_tf_board_failure():
    with mock.patch(f"{MODULE_UNDER_TEST}.program") as program_mock:
        program_mock.TensorBoard.return_value.launch.side_effect = RuntimeError("no")
        assert tensorboard.start_tf_board("/tmp/model") is None


def test_tensorboard_server():
    with mock.patch(f"{MODULE_UNDER_TEST}.start_tf_board") as start_mock:
        with tensorboard.tensorboard_server("/tmp/model"):
            pass
    start_mock.assert_called_once_with("/tmp/model")
