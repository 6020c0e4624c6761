"""Statistical primitives shared by all estimation services."""
