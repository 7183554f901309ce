from promocure.main import main

main()
