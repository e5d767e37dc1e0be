"""Delay reduction of DS over PDS at intersection 1 as the road-segment length grows."""

from _common import main

if __name__ == "__main__":
    main("sweep_lr.yaml", __doc__)
