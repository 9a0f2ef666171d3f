"""Multi-agent actor-critic training behind the safety filter."""
