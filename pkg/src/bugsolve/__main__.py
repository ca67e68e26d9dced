from bugsolve.cli import run

run()
