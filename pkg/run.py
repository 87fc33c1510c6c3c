"""
Command line entry point, see fairdyn/cli.py for the commands.
"""

import sys

from fairdyn import cli, utils
from fairdyn.logger import log


def log_code_info():
    """
    Logs information about codebase.
    """
    log.debug(f"Using code [{utils.code_hash()[:8]}]")


if __name__ == "__main__":

    log_code_info()
    try:
        exit_code = cli.main(sys.argv[1:])
    except Exception as e:
        try:
            print("!" * 60)
            print(e)
            print("!" * 60)
            log.error("ERROR:" + str(e))
            import traceback
            log.error(traceback.format_exc())
            log.save_log("fairdyn_error.txt")
        except Exception as logging_error:
            # just ignore any errors while trying to log result
            print(f"An error occurred while logging this error, {logging_error}")
        raise e
    sys.exit(exit_code)
