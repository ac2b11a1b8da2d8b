"""Dense-region crop proposal, detection fusion and COCO evaluation for small-vehicle detection."""
