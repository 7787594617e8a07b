from nullmanifold.main import main

raise SystemExit(main())
