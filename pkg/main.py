# main.py
from biphoton_simulator.cli import cli

if __name__ == "__main__":
    cli()
