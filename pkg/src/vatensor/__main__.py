from vatensor.cli import main

raise SystemExit(main())
