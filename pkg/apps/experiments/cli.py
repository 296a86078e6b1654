"""
``cli_main`` runs an experiment subcommand and returns its exit code, for
callers that drive several commands from one Python process.
"""
import sys

from django.core.management import call_command
from django.core.management.base import CommandError

from .commands import SUCCESS, USAGE_ERROR

SUBCOMMANDS = ('gen-instances', 'run-static', 'run-policy', 'search', 'profile', 'ablate', 'report')


def command_name(subcommand):
    return subcommand.replace('-', '_')


def cli_main(argv=None, stdout=None, stderr=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if not argv or argv[0] not in SUBCOMMANDS:
        stderr.write(f"usage: <{'|'.join(SUBCOMMANDS)}> [options]\n")
        return USAGE_ERROR
    try:
        call_command(command_name(argv[0]), *argv[1:], stdout=stdout, stderr=stderr)
    except CommandError as exc:
        stderr.write(f"{exc}\n")
        # argparse failures carry Django's default code
        return USAGE_ERROR if exc.returncode == 1 else exc.returncode
    return SUCCESS
