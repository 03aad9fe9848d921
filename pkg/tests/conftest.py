import hypothesis

hypothesis.settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=50,
)
hypothesis.settings.load_profile("ci")

# Filled by the acceptance tests; echoed after the run so every criterion's
# verdict is visible regardless of capture settings.
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines:
        terminalreporter.write_line(line)
