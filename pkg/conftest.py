"""Pytest wiring for absltest-based tests: absl flags are normally parsed by
absltest.main(), which pytest does not call."""

from absl import flags
import pytest


def pytest_configure(config):
  del config
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()


@pytest.fixture(autouse=True)
def _absl_flags_parsed():
  # main.run() unparses FLAGS and leaves them unparsed after a usage error.
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()
  yield
