from rpnmf.cli import main

raise SystemExit(main())
