# Scenario files for app.py check
