from dragonet.cli import main

main()
