"""draftrank: learns a shared card/deck embedding space from human draft
pick logs and serves live pick recommendations by embedding distance."""

__version__ = "0.1.0"
