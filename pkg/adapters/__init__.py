# Adapters: how runs get in (batch CLI)
