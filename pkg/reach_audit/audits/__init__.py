"""Item availability and user recourse audits."""
