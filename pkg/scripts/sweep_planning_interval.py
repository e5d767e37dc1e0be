"""DS and PDS delay at intersection 1 as the planning interval grows."""

from _common import main

if __name__ == "__main__":
    main("sweep_dt.yaml", __doc__)
