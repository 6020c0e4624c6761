"""Business services package - contains all business logic."""
