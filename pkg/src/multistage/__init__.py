"""Two-stage M-estimation: zoomed-in sampling designs and their limit laws."""

__version__ = "0.1.0"
