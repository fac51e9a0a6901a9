"""Value objects, ratings ingestion, model bundles and report writers."""
