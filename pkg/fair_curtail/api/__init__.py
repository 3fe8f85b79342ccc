"""Domain models and command-line front end."""
