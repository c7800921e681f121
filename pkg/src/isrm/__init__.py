"""Indoor semantic region mapping on procedurally generated floorplans."""

__version__ = "0.1.0"
