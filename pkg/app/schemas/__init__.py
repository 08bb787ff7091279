# Schemas
