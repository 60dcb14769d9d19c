from keyvote3d.main import main

raise SystemExit(main())
