import logging
import sys

import click
from dotenv import load_dotenv

from csflab.commands.report import cmd_report
from csflab.commands.run import cmd_run
from csflab.commands.verify import cmd_verify
from csflab.errors import CsfError
from csflab.store import log_level

logger = logging.getLogger(__name__)


class CsfGroup(click.Group):
    """CsfError を stderr に出して exit_code で終わる"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except CsfError as e:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)


@click.group(cls=CsfGroup)
@click.option("--log-level", "level", default=None, help="DEBUG / INFO / WARNING（既定は CSF_LOG_LEVEL か INFO）")
def cli(level):
    """Maxwell–Klein–Gordon の数値実験"""
    load_dotenv()
    logging.basicConfig(
        level=(level or log_level()).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# コマンド
cli.add_command(cmd_run)
cli.add_command(cmd_verify)
cli.add_command(cmd_report)


def main() -> None:
    cli(prog_name="csf")


if __name__ == "__main__":
    main()
