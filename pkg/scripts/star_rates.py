"""Strategy comparison on the five-intersection star at 2400-9600 veh/h."""

from _common import main

if __name__ == "__main__":
    main("star_rates.yaml", __doc__)
