# Core
