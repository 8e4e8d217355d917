from ehgcn.cli import main

main()
