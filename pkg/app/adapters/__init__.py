# Adapters - Transforman datos externos a nuestro formato
