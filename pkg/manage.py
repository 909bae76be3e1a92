import sys


def main():
    """mcfkit CLI (run / explain)."""
    from domains.scenarios.commands import main as cli

    return cli(sys.argv[1:])


if __name__ == '__main__':
    sys.exit(main())
