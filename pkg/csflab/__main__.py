from csflab.main import main

main()
