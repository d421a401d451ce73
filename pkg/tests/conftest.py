from hypothesis import settings

# deterministic property tests: same examples every run
settings.register_profile("ci", derandomize=True, max_examples=200)
settings.load_profile("ci")
