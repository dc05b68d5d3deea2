from conceptcause.cli import main

main()
